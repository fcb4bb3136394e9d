use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{error_rate_with_priors, misclassification_fraction, optimal_error_monte_carlo};
use crate::error::{Error, Result};
use crate::estimation::{
    align_components, fit_cc, fit_full, fit_ig, init_strategy, loglik_full, optim::BfgsOptions, EmOptions, Estimator,
    FitResult, FullOptions,
};
use crate::math::{sample_sd, std_normal_cdf};
use crate::missingness::{fit_mechanism, simulate_missing_flags, Mechanism, MissingnessParams};
use crate::model::{CanonicalTwoClass, MixtureParams, PartialSample};
use crate::rng::{stream, tag, StreamRng};

fn two() -> usize {
    2
}
fn half() -> f64 {
    0.5
}

/// Generating model of a study cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// `mu1 = 0`, `mu2 = (delta, 0, ..., 0)`, `Sigma1 = I`, `Sigma2 = lambda I`.
    TwoClass {
        delta: f64,
        lambda: f64,
        #[serde(default = "two")]
        p: usize,
        #[serde(default = "half")]
        pi1: f64,
    },
    /// `mu1 = (-1, 0, ..., 0)`, `mu2 = mu3 = (1, 0, ..., 0)`, `Sigma_i = lambda_i I`.
    ThreeClass {
        weights: [f64; 3],
        lambdas: [f64; 3],
        #[serde(default = "two")]
        p: usize,
    },
    /// `mu1 = -mu2 = (delta/2, 0, ..., 0)`, identity covariances.
    Canonical {
        delta: f64,
        #[serde(default = "two")]
        p: usize,
        #[serde(default = "half")]
        pi1: f64,
    },
    Explicit {
        theta: MixtureParams,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<MixtureParams> {
        let axis = |p: usize, v: f64| {
            let mut m = vec![0.0; p];
            m[0] = v;
            m
        };
        match *self {
            ModelSpec::TwoClass { delta, lambda, p, pi1 } => {
                if !(lambda > 0.0) || p == 0 || !(pi1 > 0.0 && pi1 < 1.0) {
                    return Err(Error::InvalidParameter(
                        "two-class model needs lambda > 0, p >= 1, 0 < pi1 < 1".into(),
                    ));
                }
                MixtureParams::new(
                    vec![pi1, 1.0 - pi1],
                    vec![vec![0.0; p], axis(p, delta)],
                    vec![DMatrix::identity(p, p), DMatrix::identity(p, p) * lambda],
                )
            }
            ModelSpec::ThreeClass { weights, lambdas, p } => {
                if p == 0 || lambdas.iter().any(|l| !(*l > 0.0)) {
                    return Err(Error::InvalidParameter("three-class model needs p >= 1 and positive scales".into()));
                }
                if lambdas[0] == 2.0 && lambdas[1] == 2.0 {
                    return Err(Error::InvalidParameter(
                        "lambda1 = lambda2 = 2 collapses the design to two components".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                MixtureParams::isotropic(
                    weights.iter().map(|w| w / total).collect(),
                    vec![axis(p, -1.0), axis(p, 1.0), axis(p, 1.0)],
                    &lambdas,
                )
            }
            ModelSpec::Canonical { delta, p, pi1 } => Ok(CanonicalTwoClass::new(delta, p, pi1)?.to_mixture()),
            ModelSpec::Explicit { ref theta } => Ok(theta.clone()),
        }
    }

    /// `Phi(-delta/2)` when the model is two-class, homoscedastic with
    /// identity covariance and equal priors.
    fn closed_form_error(&self) -> Option<f64> {
        match *self {
            ModelSpec::Canonical { delta, pi1: 0.5, .. } => Some(std_normal_cdf(-delta / 2.0)),
            ModelSpec::TwoClass { delta, lambda, pi1, .. } if lambda == 1.0 && pi1 == 0.5 => {
                Some(std_normal_cdf(-delta.abs() / 2.0))
            }
            _ => None,
        }
    }

    fn default_homoscedastic(&self) -> bool {
        matches!(self, ModelSpec::Canonical { .. })
    }
}

/// How `err(theta)` of the true rule is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ReferenceError {
    /// Closed form where available, otherwise Monte Carlo with `1e6` draws.
    #[default]
    Auto,
    ClosedForm,
    MonteCarlo {
        n_ref: usize,
    },
    /// The true rule scored on each replication's own holdout.
    Paired,
}

/// What each replication's error is measured against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Baseline {
    Fixed(f64),
    /// Per-record holdout error of the true rule.
    Paired,
}

impl Baseline {
    fn of(self, r: &ReplicationRecord) -> f64 {
        match self {
            Baseline::Fixed(v) => v,
            Baseline::Paired => r.true_rule_error,
        }
    }
}

/// Fitting settings shared by the study and cross-validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub homoscedastic: bool,
    #[serde(default = "default_grad_evals")]
    pub max_grad_evals: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_grad_evals() -> usize {
    1000
}

fn default_estimators() -> Vec<Estimator> {
    Estimator::ALL.to_vec()
}
fn default_holdout() -> f64 {
    0.2
}
fn default_resamples() -> usize {
    1000
}
fn default_name() -> String {
    "cell".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelSpec,
    pub xi: MissingnessParams,
    pub n: usize,
    pub replications: usize,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub reference_error: ReferenceError,
    /// Fit a shared covariance; defaults to true only for canonical models.
    #[serde(default)]
    pub homoscedastic: Option<bool>,
    #[serde(default = "default_grad_evals")]
    pub max_grad_evals: usize,
}

impl StudyConfig {
    pub fn new(name: &str, model: ModelSpec, xi: MissingnessParams, n: usize, replications: usize, seed: u64) -> Self {
        Self {
            name: name.into(),
            model,
            xi,
            n,
            replications,
            holdout_fraction: default_holdout(),
            seed,
            estimators: default_estimators(),
            bootstrap_resamples: default_resamples(),
            reference_error: ReferenceError::Auto,
            homoscedastic: None,
            max_grad_evals: default_grad_evals(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter("need at least one replication".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidParameter("holdout fraction must lie in (0, 1)".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidParameter("no estimators requested".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("sample size must be positive".into()));
        }
        self.model.build().map(|_| ())
    }

    pub fn fit_homoscedastic(&self) -> bool {
        self.homoscedastic.unwrap_or_else(|| self.model.default_homoscedastic())
    }

    fn rng(&self, rep: usize, purpose: &str) -> StreamRng {
        stream(&[self.seed, tag(&self.name), rep as u64, tag(purpose)])
    }

    fn holdout_size(&self) -> usize {
        ((self.holdout_fraction * self.n as f64).round() as usize).max(1)
    }

    /// The true rule's error for this cell.
    pub fn baseline(&self) -> Result<Baseline> {
        let closed = self.model.closed_form_error();
        match (self.reference_error, closed) {
            (ReferenceError::ClosedForm | ReferenceError::Auto, Some(v)) => Ok(Baseline::Fixed(v)),
            (ReferenceError::ClosedForm, None) => Err(Error::Unsupported("no closed-form error for this model".into())),
            (ReferenceError::Auto, None) => self.monte_carlo_reference(1_000_000).map(Baseline::Fixed),
            (ReferenceError::MonteCarlo { n_ref }, _) => self.monte_carlo_reference(n_ref).map(Baseline::Fixed),
            (ReferenceError::Paired, _) => Ok(Baseline::Paired),
        }
    }

    fn monte_carlo_reference(&self, n_ref: usize) -> Result<f64> {
        let theta = self.model.build()?;
        Ok(optimal_error_monte_carlo(&theta, n_ref, &mut self.rng(0, "reference")))
    }
}

/// Top-level layout of a study configuration file: a list of `[[cells]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyFile {
    pub cells: Vec<StudyConfig>,
}

impl StudyFile {
    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Outcome of one replication. Errors are holdout error rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub missing_fraction: f64,
    /// Holdout error of the true rule.
    pub true_rule_error: f64,
    pub errors: BTreeMap<Estimator, f64>,
    /// Estimators whose optimizer did not report convergence.
    pub nonconverged: Vec<Estimator>,
    /// Estimators that failed outright, with the error kind.
    pub failures: Vec<(Estimator, String)>,
}

impl ReplicationRecord {
    pub fn error(&self, e: Estimator) -> Option<f64> {
        self.errors.get(&e).copied()
    }
}

/// Fits one estimator. `visible` carries the missing labels, `complete` the
/// same rows with every label.
pub fn fit_estimator(
    estimator: Estimator,
    visible: &PartialSample,
    complete: &PartialSample,
    g: usize,
    form: crate::missingness::MissingnessForm,
    settings: &FitSettings,
) -> Result<FitResult> {
    let hom = settings.homoscedastic;
    match estimator {
        Estimator::Cc => fit_cc(complete, g, hom),
        Estimator::Ig => {
            let (init, _) = init_strategy(visible, g, form, hom)?;
            let fit = fit_ig(visible, &init, &EmOptions { homoscedastic: hom, ..Default::default() })?;
            Ok(FitResult { theta_hat: align_components(&fit.theta_hat, visible)?, ..fit })
        }
        Estimator::Full => {
            let (init, xi_init) = init_strategy(visible, g, form, hom)?;
            let ig = fit_ig(visible, &init, &EmOptions { homoscedastic: hom, ..Default::default() })?;
            // start from whichever of the two candidates has the higher full likelihood
            let mut start = (init, xi_init);
            if let Ok(xi_prof) = fit_mechanism(&ig.theta_hat, visible, form) {
                let ll =
                    |t: &MixtureParams, x: &MissingnessParams| loglik_full(t, x, visible).unwrap_or(f64::NEG_INFINITY);
                if ll(&ig.theta_hat, &xi_prof) > ll(&start.0, &start.1) {
                    start = (ig.theta_hat.clone(), xi_prof);
                }
            }
            let opts = FullOptions {
                bfgs: BfgsOptions {
                    max_grad_evals: settings.max_grad_evals,
                    seed: settings.seed,
                    ..Default::default()
                },
                homoscedastic: hom,
                fix_xi: false,
            };
            let fit = fit_full(visible, &start.0, &start.1, &opts)?;
            Ok(FitResult { theta_hat: align_components(&fit.theta_hat, visible)?, ..fit })
        }
    }
}

fn holdout_error(theta: &MixtureParams, holdout: &PartialSample, priors: &[f64]) -> Result<f64> {
    match error_rate_with_priors(theta, holdout, priors) {
        Ok(r) => Ok(r.overall),
        Err(Error::EmptyClass { .. }) => misclassification_fraction(theta, holdout),
        Err(e) => Err(e),
    }
}

/// Simulates one replication of a cell. Deterministic in
/// `(config.seed, config.name, index)`.
pub fn run_replication(config: &StudyConfig, index: usize) -> Result<ReplicationRecord> {
    let theta = config.model.build()?;
    let g = theta.g();
    let train = theta.sample(config.n, &mut config.rng(index, "train"));
    let (visible, _) = simulate_missing_flags(&theta, &config.xi, &train, &mut config.rng(index, "flags"))?;
    let holdout = theta.sample(config.holdout_size(), &mut config.rng(index, "holdout"));
    let settings = FitSettings {
        homoscedastic: config.fit_homoscedastic(),
        max_grad_evals: config.max_grad_evals,
        seed: config.rng(index, "optimizer").random(),
    };
    let mut rec = ReplicationRecord {
        replication: index,
        missing_fraction: visible.n_missing() as f64 / config.n as f64,
        true_rule_error: holdout_error(&theta, &holdout, theta.weights())?,
        errors: BTreeMap::new(),
        nonconverged: Vec::new(),
        failures: Vec::new(),
    };
    for &est in &config.estimators {
        match fit_estimator(est, &visible, &train, g, config.xi.form, &settings)
            .and_then(|fit| holdout_error(&fit.theta_hat, &holdout, theta.weights()).map(|e| (fit, e)))
        {
            Ok((fit, err)) => {
                rec.errors.insert(est, err);
                if !fit.converged {
                    rec.nonconverged.push(est);
                }
            }
            Err(e) => rec.failures.push((est, e.kind().to_string())),
        }
    }
    Ok(rec)
}

/// Mean missing-label proportion over the cell's replications, without fitting.
pub fn mean_missing_proportion(config: &StudyConfig) -> Result<f64> {
    let theta = config.model.build()?;
    let mech = Mechanism::new(&theta, config.xi)?;
    let mut total = 0.0;
    for rep in 0..config.replications {
        let train = theta.sample(config.n, &mut config.rng(rep, "train"));
        let mut rng = config.rng(rep, "flags");
        let mut k = 0usize;
        for y in train.rows() {
            let q = mech.prob(y)?;
            if rng.random::<f64>() < q {
                k += 1;
            }
        }
        total += k as f64 / config.n as f64;
    }
    Ok(total / config.replications as f64)
}

/// `mean(err_num - ref) / mean(err_den - ref)` over records holding both
/// errors. `None` when no record qualifies or either mean excess is not
/// positive.
pub fn relative_efficiency(
    records: &[ReplicationRecord],
    num: Estimator,
    den: Estimator,
    baseline: Baseline,
) -> Option<f64> {
    let pairs: Vec<(f64, f64)> =
        records.iter().filter_map(|r| Some((r.error(num)? - baseline.of(r), r.error(den)? - baseline.of(r)))).collect();
    if pairs.is_empty() {
        return None;
    }
    if num == den {
        return Some(1.0);
    }
    let m = pairs.len() as f64;
    let a = pairs.iter().map(|p| p.0).sum::<f64>() / m;
    let b = pairs.iter().map(|p| p.1).sum::<f64>() / m;
    (a > 0.0 && b > 0.0).then(|| a / b)
}

/// One row of a study report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReCell {
    pub re_full_vs_cc: Option<f64>,
    pub re_full_vs_ig: Option<f64>,
    pub se_full_vs_cc: Option<f64>,
    pub se_full_vs_ig: Option<f64>,
    pub mean_missing: f64,
    /// Mean baseline error over the records.
    pub reference_error: f64,
    pub mean_errors: BTreeMap<Estimator, f64>,
    pub records: usize,
    pub nonconverged: BTreeMap<Estimator, usize>,
    pub failed: BTreeMap<Estimator, usize>,
    pub flags: Vec<String>,
}

/// Relative efficiencies of the full-likelihood rule against the others.
pub fn estimate_re(records: &[ReplicationRecord], baseline: Baseline) -> Result<ReCell> {
    if records.is_empty() || records.iter().all(|r| r.errors.is_empty()) {
        return Err(Error::Cell("every replication failed".into()));
    }
    let mut cell = ReCell {
        re_full_vs_cc: relative_efficiency(records, Estimator::Cc, Estimator::Full, baseline),
        re_full_vs_ig: relative_efficiency(records, Estimator::Ig, Estimator::Full, baseline),
        se_full_vs_cc: None,
        se_full_vs_ig: None,
        mean_missing: records.iter().map(|r| r.missing_fraction).sum::<f64>() / records.len() as f64,
        reference_error: records.iter().map(|r| baseline.of(r)).sum::<f64>() / records.len() as f64,
        mean_errors: BTreeMap::new(),
        records: records.len(),
        nonconverged: BTreeMap::new(),
        failed: BTreeMap::new(),
        flags: Vec::new(),
    };
    for est in Estimator::ALL {
        let errs: Vec<f64> = records.iter().filter_map(|r| r.error(est)).collect();
        if !errs.is_empty() {
            cell.mean_errors.insert(est, errs.iter().sum::<f64>() / errs.len() as f64);
        }
        let nc = records.iter().filter(|r| r.nonconverged.contains(&est)).count();
        if nc > 0 {
            cell.nonconverged.insert(est, nc);
        }
        let nf = records.iter().filter(|r| r.failures.iter().any(|f| f.0 == est)).count();
        if nf > 0 {
            cell.failed.insert(est, nf);
        }
    }
    let has = |e: Estimator| cell.mean_errors.contains_key(&e);
    if has(Estimator::Full) && has(Estimator::Cc) && cell.re_full_vs_cc.is_none() {
        cell.flags.push("undefined:full_vs_cc".into());
    }
    if has(Estimator::Full) && has(Estimator::Ig) && cell.re_full_vs_ig.is_none() {
        cell.flags.push("undefined:full_vs_ig".into());
    }
    Ok(cell)
}

/// Bootstrap standard deviations of `(RE(full, cc), RE(full, ig))` over
/// replication records resampled with replacement. Resamples where a ratio is
/// undefined are skipped for that ratio.
pub fn bootstrap_se(
    records: &[ReplicationRecord],
    resamples: usize,
    seed: u64,
    baseline: Baseline,
) -> (Option<f64>, Option<f64>) {
    if records.is_empty() || resamples < 2 {
        return (None, None);
    }
    let mut rng = stream(&[seed, tag("bootstrap")]);
    let (mut cc, mut ig) = (Vec::with_capacity(resamples), Vec::with_capacity(resamples));
    let mut draw = Vec::with_capacity(records.len());
    for _ in 0..resamples {
        draw.clear();
        for _ in 0..records.len() {
            draw.push(records[rng.random_range(0..records.len())].clone());
        }
        if let Some(v) = relative_efficiency(&draw, Estimator::Cc, Estimator::Full, baseline) {
            cc.push(v);
        }
        if let Some(v) = relative_efficiency(&draw, Estimator::Ig, Estimator::Full, baseline) {
            ig.push(v);
        }
    }
    let sd = |v: &[f64]| (v.len() >= 2).then(|| sample_sd(v));
    (sd(&cc), sd(&ig))
}

/// Result of one study cell; failures are isolated per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub config: StudyConfig,
    pub result: Result<ReCell>,
}

fn run_cell(config: &StudyConfig) -> Result<ReCell> {
    config.validate()?;
    let baseline = config.baseline()?;
    let records: Vec<ReplicationRecord> =
        (0..config.replications).into_par_iter().map(|rep| run_replication(config, rep)).collect::<Result<Vec<_>>>()?;
    let mut cell = estimate_re(&records, baseline)?;
    let (a, b) = bootstrap_se(&records, config.bootstrap_resamples, config.seed ^ tag(&config.name), baseline);
    cell.se_full_vs_cc = a;
    cell.se_full_vs_ig = b;
    Ok(cell)
}

/// Runs every cell; replications run concurrently and are aggregated in
/// index order, so results do not depend on scheduling.
pub fn run_study(cells: &[StudyConfig]) -> Result<Vec<CellOutcome>> {
    if cells.is_empty() {
        return Err(Error::InvalidParameter("empty study grid".into()));
    }
    Ok(cells.par_iter().map(|c| CellOutcome { config: c.clone(), result: run_cell(c) }).collect())
}

/// Degree of separation `delta / (1 + sqrt(lambda))`.
pub fn separation_degree(delta: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    Ok(delta / (1.0 + lambda.sqrt()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn describe(model: &ModelSpec) -> String {
    match model {
        ModelSpec::TwoClass { delta, lambda, p, pi1 } => {
            format!("two_class(delta={delta};lambda={lambda};p={p};pi1={pi1})")
        }
        ModelSpec::ThreeClass { weights, lambdas, p } => format!(
            "three_class(pi={:?};lambda={:?};p={p})",
            weights.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>(),
            lambdas
        ),
        ModelSpec::Canonical { delta, p, pi1 } => format!("canonical(delta={delta};p={p};pi1={pi1})"),
        ModelSpec::Explicit { theta } => format!("explicit(g={};p={})", theta.g(), theta.p()),
    }
}

/// One CSV row per cell, after `# key=value` metadata lines.
pub fn write_report_csv<W: Write>(outcomes: &[CellOutcome], mut w: W, metadata: &[(String, String)]) -> Result<()> {
    for (k, v) in metadata {
        writeln!(w, "# {k}={v}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "cell",
        "model",
        "form",
        "xi0",
        "xi1",
        "n",
        "replications",
        "missing_proportion",
        "re_full_vs_cc",
        "se_full_vs_cc",
        "re_full_vs_ig",
        "se_full_vs_ig",
        "reference_error",
        "err_cc",
        "err_ig",
        "err_full",
        "nonconverged",
        "failed",
        "flags",
        "error",
    ])?;
    let counts =
        |m: &BTreeMap<Estimator, usize>| m.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join(";");
    for o in outcomes {
        let c = &o.config;
        let mut row = vec![
            c.name.clone(),
            describe(&c.model),
            c.xi.form.to_string(),
            format!("{:?}", c.xi.xi0),
            format!("{:?}", c.xi.xi1),
            c.n.to_string(),
            c.replications.to_string(),
        ];
        match &o.result {
            Ok(cell) => row.extend([
                format!("{:?}", cell.mean_missing),
                opt(cell.re_full_vs_cc),
                opt(cell.se_full_vs_cc),
                opt(cell.re_full_vs_ig),
                opt(cell.se_full_vs_ig),
                format!("{:?}", cell.reference_error),
                opt(cell.mean_errors.get(&Estimator::Cc).copied()),
                opt(cell.mean_errors.get(&Estimator::Ig).copied()),
                opt(cell.mean_errors.get(&Estimator::Full).copied()),
                counts(&cell.nonconverged),
                counts(&cell.failed),
                cell.flags.join(";"),
                String::new(),
            ]),
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), 12));
                row.push(e.kind().to_string());
            }
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
