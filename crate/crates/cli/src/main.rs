#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixmiss::asymptotics::{are_curve, write_curve_csv, DEFAULT_TOL};
use mixmiss::classifier::{bayes_allocate, log_entropy, posterior};
use mixmiss::estimation::{Estimator, FitResult};
use mixmiss::harness::{
    fit_estimator, kfold_cv, nadaraya_watson_missing, pca_project, run_study, write_report_csv, FitSettings, ModelSpec,
    StudyFile,
};
use mixmiss::missingness::simulate_missing_flags;
use mixmiss::rng::{stream, tag};
use mixmiss::{GroundTruth, MissingnessForm, MissingnessParams, MixtureParams, PartialSample};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] mixmiss::Error),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::File { .. } | CliError::Io(_) => "IoError",
            CliError::Json(_) | CliError::Csv(_) => "ParseError",
            CliError::Usage(_) => "UsageError",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Semi-supervised Gaussian mixture discriminant analysis with informative
/// missing labels.
#[derive(Parser)]
#[command(name = "mixmiss", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a labeled sample, hide labels through the missingness mechanism,
    /// and write the visible sample plus a ground-truth sidecar.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        xi: XiArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out>.truth.csv`.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Fit one estimator and write the result as JSON.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        estimator: EstimatorArg,
        #[arg(long, default_value_t = 2)]
        g: usize,
        #[arg(long, value_enum, default_value_t = FormArg::Entropy)]
        form: FormArg,
        /// Hidden labels; without it the complete-data fit uses labeled rows only.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        homoscedastic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Allocate every row with a fitted model.
    Classify {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Asymptotic efficiency curve over a grid of separations.
    Are {
        #[arg(long, allow_hyphen_values = true)]
        xi0: f64,
        #[arg(long, allow_hyphen_values = true)]
        xi1: f64,
        #[arg(long, default_value_t = 0.5)]
        from: f64,
        #[arg(long, default_value_t = 10.0)]
        to: f64,
        #[arg(long, default_value_t = 0.25)]
        step: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the cells of a TOML study file and write one report row per cell.
    ReStudy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// K-fold cross-validated error of an estimator.
    Cv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum)]
        estimator: EstimatorArg,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        g: usize,
        #[arg(long, value_enum, default_value_t = FormArg::Entropy)]
        form: FormArg,
        #[arg(long)]
        homoscedastic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Kernel estimate of the missing probability against negative log entropy.
    NwDiagnostic {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        bandwidth: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project the features onto the leading principal components.
    Pca {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Cc,
    Ig,
    Full,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Cc => Estimator::Cc,
            EstimatorArg::Ig => Estimator::Ig,
            EstimatorArg::Full => Estimator::Full,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Entropy,
    Discriminant,
}

impl From<FormArg> for MissingnessForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Entropy => MissingnessForm::Entropy,
            FormArg::Discriminant => MissingnessForm::Discriminant,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    TwoClass,
    ThreeClass,
    Canonical,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Canonical)]
    model: ModelKind,
    #[arg(long, default_value_t = 2.0)]
    delta: f64,
    /// Scale of the second covariance in the two-class model.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Three comma-separated covariance scales for the three-class model.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 4.0])]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    p: usize,
    #[arg(long, default_value_t = 0.5)]
    pi1: f64,
}

impl ModelArgs {
    fn spec(&self) -> Result<ModelSpec> {
        Ok(match self.model {
            ModelKind::TwoClass => {
                ModelSpec::TwoClass { delta: self.delta, lambda: self.lambda, p: self.p, pi1: self.pi1 }
            }
            ModelKind::Canonical => ModelSpec::Canonical { delta: self.delta, p: self.p, pi1: self.pi1 },
            ModelKind::ThreeClass => {
                let lambdas: [f64; 3] = self
                    .lambdas
                    .as_slice()
                    .try_into()
                    .map_err(|_| CliError::Usage("--lambdas needs exactly three values".into()))?;
                ModelSpec::ThreeClass { weights: [1.0 / 3.0; 3], lambdas, p: self.p }
            }
        })
    }
}

#[derive(Args)]
struct XiArgs {
    #[arg(long, allow_hyphen_values = true)]
    xi0: f64,
    #[arg(long, allow_hyphen_values = true)]
    xi1: f64,
    #[arg(long, value_enum, default_value_t = FormArg::Entropy)]
    form: FormArg,
}

/// JSON written by `fit`; `classify` and `nw-diagnostic` read it back.
#[derive(Serialize, Deserialize)]
struct FitFile {
    version: String,
    estimator: Estimator,
    form: MissingnessForm,
    seed: u64,
    result: FitResult,
}

fn metadata(pairs: &[(&str, String)]) -> Vec<(String, String)> {
    let mut m = vec![("version".to_string(), env!("CARGO_PKG_VERSION").to_string())];
    m.extend(pairs.iter().map(|(k, v)| (k.to_string(), v.clone())));
    m
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::File { path: path.into(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::File { path: path.into(), source })
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_sample(path: &Path) -> Result<PartialSample> {
    Ok(PartialSample::read_csv(open(path)?)?)
}

fn read_fit(path: &Path) -> Result<FitFile> {
    Ok(serde_json::from_reader(open(path)?)?)
}

fn with_truth(visible: &PartialSample, truth: &Path) -> Result<PartialSample> {
    Ok(visible.restore(&GroundTruth::read_csv(open(truth)?)?)?)
}

fn labeled_rows(s: &PartialSample) -> PartialSample {
    let idx: Vec<usize> = (0..s.n()).filter(|&j| !s.is_missing(j)).collect();
    s.subset(&idx)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { model, xi, n, seed, out, truth } => {
            let spec = model.spec()?;
            let theta = spec.build()?;
            let xi = MissingnessParams::new(xi.xi0, xi.xi1, xi.form.into());
            let complete = theta.sample(n, &mut stream(&[seed, tag("simulate"), tag("sample")]));
            let (visible, hidden) =
                simulate_missing_flags(&theta, &xi, &complete, &mut stream(&[seed, tag("simulate"), tag("flags")]))?;
            let truth = truth.unwrap_or_else(|| PathBuf::from(format!("{}.truth.csv", out.display())));
            let meta = metadata(&[
                ("seed", seed.to_string()),
                ("form", xi.form.to_string()),
                ("xi0", xi.xi0.to_string()),
                ("xi1", xi.xi1.to_string()),
                ("model", serde_json::to_string(&spec)?),
            ]);
            let mut w = create(&out)?;
            visible.write_csv(&mut w, &meta)?;
            w.flush()?;
            let mut w = create(&truth)?;
            hidden.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Fit { input, estimator, g, form, truth, homoscedastic, seed, out } => {
            let visible = read_sample(&input)?;
            let complete = match &truth {
                Some(t) => with_truth(&visible, t)?,
                None => labeled_rows(&visible),
            };
            let settings = FitSettings { homoscedastic, max_grad_evals: 1000, seed };
            let result = fit_estimator(estimator.into(), &visible, &complete, g, form.into(), &settings)?;
            let file = FitFile {
                version: env!("CARGO_PKG_VERSION").into(),
                estimator: estimator.into(),
                form: form.into(),
                seed,
                result,
            };
            let mut w = sink(&out)?;
            serde_json::to_writer_pretty(&mut w, &file)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Classify { fit, input, out } => {
            let file = read_fit(&fit)?;
            let theta: &MixtureParams = &file.result.theta_hat;
            let sample = read_sample(&input)?;
            let mut w = sink(&out)?;
            for (k, v) in metadata(&[("seed", file.seed.to_string()), ("form", file.form.to_string())]) {
                writeln!(w, "# {k}={v}")?;
            }
            let mut cw = csv::Writer::from_writer(w);
            let mut header = vec!["row".to_string(), "allocated".into(), "log_entropy".into()];
            header.extend((1..=theta.g()).map(|i| format!("tau{i}")));
            cw.write_record(&header)?;
            for (j, y) in sample.rows().enumerate() {
                let mut rec =
                    vec![j.to_string(), bayes_allocate(theta, y)?.to_string(), format!("{:?}", log_entropy(theta, y)?)];
                rec.extend(posterior(theta, y)?.values().iter().map(|t| format!("{t:?}")));
                cw.write_record(&rec)?;
            }
            cw.flush()?;
        }
        Command::Are { xi0, xi1, from, to, step, tol, out } => {
            if !(step > 0.0) || !(to >= from) {
                return Err(CliError::Usage("need step > 0 and to >= from".into()));
            }
            let count = ((to - from) / step + 1e-9).floor() as usize + 1;
            let grid: Vec<f64> = (0..count).map(|i| from + step * i as f64).collect();
            let xi = MissingnessParams::discriminant(xi0, xi1);
            let points = are_curve(&grid, &xi, tol)?;
            let meta = metadata(&[
                ("seed", "none".into()),
                ("form", xi.form.to_string()),
                ("xi0", xi0.to_string()),
                ("xi1", xi1.to_string()),
            ]);
            let mut w = sink(&out)?;
            write_curve_csv(&points, &mut w, &meta)?;
            w.flush()?;
        }
        Command::ReStudy { config, out } => {
            let text =
                std::fs::read_to_string(&config).map_err(|source| CliError::File { path: config.clone(), source })?;
            let study = StudyFile::from_toml(&text)?;
            let outcomes = run_study(&study.cells)?;
            let seeds: Vec<String> = study.cells.iter().map(|c| c.seed.to_string()).collect();
            let forms: Vec<String> = study.cells.iter().map(|c| c.xi.form.to_string()).collect();
            let meta = metadata(&[("seed", seeds.join(";")), ("form", forms.join(";"))]);
            let mut w = sink(&out)?;
            write_report_csv(&outcomes, &mut w, &meta)?;
            w.flush()?;
        }
        Command::Cv { input, truth, estimator, k, g, form, homoscedastic, seed } => {
            let visible = read_sample(&input)?;
            let complete = with_truth(&visible, &truth)?;
            let settings = FitSettings { homoscedastic, max_grad_evals: 1000, seed };
            let err = kfold_cv(&visible, &complete, g, k, estimator.into(), form.into(), &settings, seed)?;
            let report = serde_json::json!({
                "version": env!("CARGO_PKG_VERSION"),
                "seed": seed,
                "form": MissingnessForm::from(form).to_string(),
                "estimator": Estimator::from(estimator),
                "k": k,
                "cv_error": err,
            });
            println!("{report}");
        }
        Command::NwDiagnostic { input, fit, bandwidth, out } => {
            let file = read_fit(&fit)?;
            let sample = read_sample(&input)?;
            let curve = nadaraya_watson_missing(&sample, &file.result.theta_hat, bandwidth)?;
            let meta = metadata(&[
                ("seed", file.seed.to_string()),
                ("form", file.form.to_string()),
                ("bandwidth", bandwidth.to_string()),
            ]);
            let mut w = sink(&out)?;
            curve.write_csv(&mut w, &meta)?;
            w.flush()?;
        }
        Command::Pca { input, dim, out } => {
            let sample = read_sample(&input)?;
            let pca = pca_project(&sample, dim)?;
            let explained: Vec<String> = pca.explained_variance.iter().map(|v| format!("{v:?}")).collect();
            let meta = metadata(&[("seed", "none".into()), ("explained_variance", explained.join(";"))]);
            let mut w = sink(&out)?;
            pca.projected.write_csv(&mut w, &meta)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::from(1)
        }
    }
}
