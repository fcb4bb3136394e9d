//! Parameter containers, normal densities and sampling for g-class normal mixtures.
//!
//! Component indices are zero-based (`0..g`) everywhere in the API, while class
//! labels carried by samples are one-based (`1..=g`) to match the CSV format.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, LN_2PI};

type Scratch = SmallVec<[f64; 8]>;

/// Weights, means and covariances of a g-class normal mixture.
///
/// Each covariance is factorized once at construction; the lower Cholesky
/// factor and log-determinant are cached for density evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr", into = "MixtureRepr")]
pub struct MixtureParams {
    p: usize,
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    chol: Vec<DMatrix<f64>>,
    log_dets: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MixtureRepr {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<MixtureRepr> for MixtureParams {
    type Error = Error;

    fn try_from(r: MixtureRepr) -> Result<Self> {
        let covs = r
            .covariances
            .iter()
            .map(|rows| {
                let p = rows.len();
                if rows.iter().any(|row| row.len() != p) {
                    return Err(Error::InvalidParameter("covariance rows must be square".into()));
                }
                Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
            })
            .collect::<Result<Vec<_>>>()?;
        MixtureParams::new(r.weights, r.means, covs)
    }
}

impl From<MixtureParams> for MixtureRepr {
    fn from(m: MixtureParams) -> Self {
        MixtureRepr {
            weights: m.weights.clone(),
            means: m.means.iter().map(|v| v.iter().copied().collect()).collect(),
            covariances: m
                .covariances
                .iter()
                .map(|c| (0..c.nrows()).map(|i| c.row(i).iter().copied().collect()).collect())
                .collect(),
        }
    }
}

fn lower_cholesky(cov: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let sym_tol = 1e-10 * (1.0 + cov.amax());
    if (cov - cov.transpose()).amax() > sym_tol {
        return None;
    }
    nalgebra::Cholesky::new(cov.clone()).map(|c| c.l())
}

impl MixtureParams {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        let g = weights.len();
        if g < 2 {
            return Err(Error::InvalidParameter(format!("need at least two classes, got {g}")));
        }
        if means.len() != g || covariances.len() != g {
            return Err(Error::InvalidParameter(format!(
                "{g} weights but {} means and {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be strictly positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        let p = means[0].len();
        if p == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        for m in &means {
            if m.len() != p {
                return Err(Error::Dimension { expected: p, got: m.len() });
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("means must be finite".into()));
            }
        }
        let mut chol = Vec::with_capacity(g);
        let mut log_dets = Vec::with_capacity(g);
        for (k, c) in covariances.iter().enumerate() {
            if c.nrows() != p || c.ncols() != p {
                return Err(Error::Dimension { expected: p, got: c.nrows() });
            }
            let l = lower_cholesky(c).ok_or(Error::NotPositiveDefinite { index: k })?;
            log_dets.push(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>());
            chol.push(l);
        }
        Ok(Self { p, weights, means: means.into_iter().map(DVector::from_vec).collect(), covariances, chol, log_dets })
    }

    /// Builds parameters directly from lower-triangular factors with positive
    /// diagonals. Used by optimizers that already work in factor space.
    pub(crate) fn from_factors(weights: Vec<f64>, means: Vec<DVector<f64>>, factors: Vec<DMatrix<f64>>) -> Self {
        let p = means[0].len();
        let covariances = factors.iter().map(|l| l * l.transpose()).collect();
        let log_dets = factors.iter().map(|l| 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()).collect();
        Self { p, weights, means, covariances, chol: factors, log_dets }
    }

    /// Equal-weight convenience constructor with isotropic covariances `scale_k * I`.
    pub fn isotropic(weights: Vec<f64>, means: Vec<Vec<f64>>, scales: &[f64]) -> Result<Self> {
        let p = means.first().map_or(0, Vec::len);
        let covs = scales.iter().map(|s| DMatrix::identity(p, p) * *s).collect();
        Self::new(weights, means, covs)
    }

    pub fn g(&self) -> usize {
        self.weights.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, k: usize) -> &DVector<f64> {
        &self.means[k]
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariance(&self, k: usize) -> &DMatrix<f64> {
        &self.covariances[k]
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// Cached lower Cholesky factor of covariance `k`.
    pub fn cholesky(&self, k: usize) -> &DMatrix<f64> {
        &self.chol[k]
    }

    pub fn log_det(&self, k: usize) -> f64 {
        self.log_dets[k]
    }

    fn check_dim(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.p {
            return Err(Error::Dimension { expected: self.p, got: y.len() });
        }
        Ok(())
    }

    /// `log phi(y; mu_k, Sigma_k)` without the dimension check.
    #[inline]
    pub(crate) fn log_component_unchecked(&self, k: usize, y: &[f64]) -> f64 {
        let l = &self.chol[k];
        let mu = &self.means[k];
        let p = self.p;
        let mut z: Scratch = SmallVec::from_elem(0.0, p);
        let mut quad = 0.0;
        for i in 0..p {
            let mut s = y[i] - mu[i];
            for j in 0..i {
                s -= l[(i, j)] * z[j];
            }
            let zi = s / l[(i, i)];
            z[i] = zi;
            quad += zi * zi;
        }
        -0.5 * (quad + self.log_dets[k] + p as f64 * LN_2PI)
    }

    /// Log density of component `k` (zero-based) at `y`, via a Cholesky solve.
    pub fn log_component_density(&self, k: usize, y: &[f64]) -> Result<f64> {
        self.check_dim(y)?;
        if k >= self.g() {
            return Err(Error::InvalidParameter(format!("component {k} out of range for g = {}", self.g())));
        }
        Ok(self.log_component_unchecked(k, y))
    }

    /// Fills `out[k] = log pi_k + log phi(y; mu_k, Sigma_k)`.
    #[inline]
    pub(crate) fn weighted_log_densities_into(&self, y: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.weights[k].ln() + self.log_component_unchecked(k, y);
        }
    }

    pub fn weighted_log_densities(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        let mut out = vec![0.0; self.g()];
        self.weighted_log_densities_into(y, &mut out);
        Ok(out)
    }

    pub fn log_mixture_density(&self, y: &[f64]) -> Result<f64> {
        Ok(log_sum_exp(&self.weighted_log_densities(y)?))
    }

    /// Mixture density `sum_k pi_k phi(y; mu_k, Sigma_k)`.
    pub fn mixture_density(&self, y: &[f64]) -> Result<f64> {
        self.log_mixture_density(y).map(f64::exp)
    }

    /// True when all covariances agree elementwise within `tol`.
    pub fn is_homoscedastic(&self, tol: f64) -> bool {
        self.covariances.windows(2).all(|w| (&w[0] - &w[1]).amax() <= tol)
    }

    /// Reorders components so that new component `k` is old component `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            p: self.p,
            weights: perm.iter().map(|&k| self.weights[k]).collect(),
            means: perm.iter().map(|&k| self.means[k].clone()).collect(),
            covariances: perm.iter().map(|&k| self.covariances[k].clone()).collect(),
            chol: perm.iter().map(|&k| self.chol[k].clone()).collect(),
            log_dets: perm.iter().map(|&k| self.log_dets[k]).collect(),
        }
    }

    /// Draws one observation from component `k` into `out`.
    pub fn sample_component<R: Rng + ?Sized>(&self, k: usize, rng: &mut R, out: &mut [f64]) {
        let l = &self.chol[k];
        let z: Scratch = (0..self.p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for i in 0..self.p {
            let mut s = self.means[k][i];
            for j in 0..=i {
                s += l[(i, j)] * z[j];
            }
            out[i] = s;
        }
    }

    /// Draws a categorical class index (zero-based) from the weights.
    pub fn sample_class<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.g() - 1
    }

    /// Fully labeled sample of size `n`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PartialSample {
        let mut features = vec![0.0; n * self.p];
        let mut labels = Vec::with_capacity(n);
        for row in features.chunks_mut(self.p) {
            let k = self.sample_class(rng);
            self.sample_component(k, rng, row);
            labels.push(Some(k + 1));
        }
        PartialSample { p: self.p, features, labels }
    }

    /// Fully labeled sample from a generator seeded with `seed`.
    pub fn sample_seeded(&self, n: usize, seed: u64) -> PartialSample {
        self.sample(n, &mut crate::rng::seeded(seed))
    }
}

/// Observations with optional one-based class labels.
///
/// A row is unclassified (its missing-label flag is set) exactly when its label
/// is absent, so the flag vector is derived rather than stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialSample {
    p: usize,
    features: Vec<f64>,
    labels: Vec<Option<usize>>,
}

impl PartialSample {
    /// `features` is row-major with `labels.len()` rows of length `p`.
    pub fn new(p: usize, features: Vec<f64>, labels: Vec<Option<usize>>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if features.len() != p * labels.len() {
            return Err(Error::Dimension { expected: p * labels.len(), got: features.len() });
        }
        if labels.contains(&Some(0)) {
            return Err(Error::InvalidParameter("labels are one-based".into()));
        }
        Ok(Self { p, features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<Option<usize>>) -> Result<Self> {
        let p = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidParameter("ragged feature rows".into()));
        }
        Self::new(p, rows.concat(), labels)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.features[j * self.p..(j + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks(self.p)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, j: usize) -> Option<usize> {
        self.labels[j]
    }

    pub fn is_missing(&self, j: usize) -> bool {
        self.labels[j].is_none()
    }

    pub fn missing_flags(&self) -> Vec<bool> {
        self.labels.iter().map(Option::is_none).collect()
    }

    pub fn n_missing(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(Option::is_some)
    }

    /// Checks every present label lies in `1..=g`.
    pub fn validate_for(&self, g: usize) -> Result<()> {
        match self.labels.iter().flatten().find(|&&l| l > g) {
            Some(&l) => Err(Error::InvalidParameter(format!("label {l} outside 1..={g}"))),
            None => Ok(()),
        }
    }

    /// Number of labeled rows per class, indexed by zero-based class.
    pub fn class_counts(&self, g: usize) -> Vec<usize> {
        let mut counts = vec![0; g];
        for l in self.labels.iter().flatten() {
            if *l <= g {
                counts[l - 1] += 1;
            }
        }
        counts
    }

    /// Hides the labels of rows with `flags[j] == true`, returning the visible
    /// sample and a sidecar with the hidden truth.
    pub fn hide_labels(&self, flags: &[bool]) -> Result<(PartialSample, GroundTruth)> {
        if flags.len() != self.n() {
            return Err(Error::Dimension { expected: self.n(), got: flags.len() });
        }
        let mut labels = self.labels.clone();
        let mut truth = GroundTruth::default();
        for (j, &hide) in flags.iter().enumerate() {
            if hide {
                if let Some(l) = labels[j].take() {
                    truth.rows.push(j);
                    truth.labels.push(l);
                }
            }
        }
        Ok((PartialSample { p: self.p, features: self.features.clone(), labels }, truth))
    }

    /// Restores hidden labels from a sidecar.
    pub fn restore(&self, truth: &GroundTruth) -> Result<PartialSample> {
        let mut labels = self.labels.clone();
        for (&row, &l) in truth.rows.iter().zip(&truth.labels) {
            if row >= labels.len() {
                return Err(Error::Dimension { expected: labels.len(), got: row });
            }
            labels[row] = Some(l);
        }
        PartialSample::new(self.p, self.features.clone(), labels)
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> PartialSample {
        let mut features = Vec::with_capacity(idx.len() * self.p);
        for &j in idx {
            features.extend_from_slice(self.row(j));
        }
        PartialSample { p: self.p, features, labels: idx.iter().map(|&j| self.labels[j]).collect() }
    }

    /// Same features with labels replaced.
    pub fn with_labels(&self, labels: Vec<Option<usize>>) -> Result<PartialSample> {
        PartialSample::new(self.p, self.features.clone(), labels)
    }

    /// Concatenates two samples of equal dimension.
    pub fn concat(&self, other: &PartialSample) -> Result<PartialSample> {
        if self.p != other.p {
            return Err(Error::Dimension { expected: self.p, got: other.p });
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(PartialSample { p: self.p, features, labels })
    }

    /// Writes the sample as CSV: optional `# key=value` metadata lines, a
    /// header `y1..yp,label`, then one row per observation with an empty
    /// label cell for unclassified rows.
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[(String, String)]) -> Result<()> {
        for (k, v) in metadata {
            writeln!(w, "# {k}={v}")?;
        }
        let mut cw = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.p).map(|i| format!("y{i}")).collect();
        header.push("label".into());
        cw.write_record(&header)?;
        for j in 0..self.n() {
            let mut rec: Vec<String> = self.row(j).iter().map(|x| format!("{x:?}")).collect();
            rec.push(self.labels[j].map(|l| l.to_string()).unwrap_or_default());
            cw.write_record(&rec)?;
        }
        cw.flush()?;
        Ok(())
    }

    /// Reads the CSV format produced by [`PartialSample::write_csv`]. Lines
    /// starting with `#` are ignored.
    pub fn read_csv<R: Read>(r: R) -> Result<PartialSample> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
        let header = rdr.headers()?.clone();
        let label_col =
            header.iter().position(|h| h == "label").ok_or_else(|| Error::Parse("missing `label` column".into()))?;
        let feature_cols: Vec<usize> = (0..header.len()).filter(|&c| c != label_col).collect();
        for (i, &c) in feature_cols.iter().enumerate() {
            if header.get(c) != Some(format!("y{}", i + 1).as_str()) {
                return Err(Error::Parse(format!("expected column y{}, found {:?}", i + 1, header.get(c))));
            }
        }
        let p = feature_cols.len();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for &c in &feature_cols {
                let v: f64 =
                    rec[c].parse().map_err(|_| Error::Parse(format!("row {}: bad number {:?}", line + 1, &rec[c])))?;
                features.push(v);
            }
            let cell = &rec[label_col];
            labels.push(if cell.is_empty() {
                None
            } else {
                Some(cell.parse().map_err(|_| Error::Parse(format!("row {}: bad label {cell:?}", line + 1)))?)
            });
        }
        PartialSample::new(p, features, labels)
    }
}

/// Hidden labels of unclassified rows, kept apart from the visible sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rows: Vec<usize>,
    pub labels: Vec<usize>,
}

impl GroundTruth {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut cw = csv::Writer::from_writer(w);
        cw.write_record(["row", "label"])?;
        for (r, l) in self.rows.iter().zip(&self.labels) {
            cw.write_record([r.to_string(), l.to_string()])?;
        }
        cw.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<GroundTruth> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
        let mut truth = GroundTruth::default();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad integer {s:?}")));
            truth.rows.push(parse(&rec[0])?);
            truth.labels.push(parse(&rec[1])?);
        }
        Ok(truth)
    }
}

/// Two-class homoscedastic model in canonical form:
/// `mu_1 = -mu_2 = (delta/2, 0, ..., 0)` and identity covariance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalTwoClass {
    pub delta: f64,
    pub p: usize,
    pub pi1: f64,
}

impl CanonicalTwoClass {
    pub fn new(delta: f64, p: usize, pi1: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {delta}")));
        }
        if p == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if !(pi1 > 0.0 && pi1 < 1.0) {
            return Err(Error::InvalidParameter(format!("pi1 must lie in (0, 1), got {pi1}")));
        }
        Ok(Self { delta, p, pi1 })
    }

    /// Log prior odds `log(pi1 / pi2)`.
    pub fn log_odds(&self) -> f64 {
        (self.pi1 / (1.0 - self.pi1)).ln()
    }

    pub fn to_mixture(&self) -> MixtureParams {
        let mut m1 = vec![0.0; self.p];
        m1[0] = self.delta / 2.0;
        let m2: Vec<f64> = m1.iter().map(|x| -x).collect();
        MixtureParams::isotropic(vec![self.pi1, 1.0 - self.pi1], vec![m1, m2], &[1.0, 1.0])
            .expect("canonical parameters are valid by construction")
    }
}
