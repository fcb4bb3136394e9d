//! The missing-label mechanism.
//!
//! The probability that a label is missing is logistic in a covariate derived
//! from the observation: either the log Shannon entropy of the posterior
//! ([`MissingnessForm::Entropy`]) or the squared linear discriminant of a
//! two-class homoscedastic model ([`MissingnessForm::Discriminant`]). The two
//! are related through a second-order expansion of the log entropy around the
//! decision boundary, see [`taylor_log_entropy`].

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::log_entropy_from_weighted;
use crate::error::{Error, Result};
use crate::math::{log1m_logistic, log_logistic, logistic, logit, LN_2PI};
use crate::model::{CanonicalTwoClass, GroundTruth, MixtureParams, PartialSample};
use crate::quadrature::{centered_breaks, integrate_panels, QuadOptions};

/// Which covariate the logistic mechanism uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingnessForm {
    /// `logit q = xi0 + xi1 * log en(y; theta)`
    Entropy,
    /// `logit q = xi0 + xi1 * d(y; beta)^2`
    Discriminant,
}

impl fmt::Display for MissingnessForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MissingnessForm::Entropy => "entropy",
            MissingnessForm::Discriminant => "discriminant",
        })
    }
}

impl FromStr for MissingnessForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(MissingnessForm::Entropy),
            "discriminant" => Ok(MissingnessForm::Discriminant),
            other => Err(Error::Parse(format!("unknown missingness form {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingnessParams {
    pub xi0: f64,
    pub xi1: f64,
    pub form: MissingnessForm,
}

impl MissingnessParams {
    pub fn new(xi0: f64, xi1: f64, form: MissingnessForm) -> Self {
        Self { xi0, xi1, form }
    }

    pub fn entropy(xi0: f64, xi1: f64) -> Self {
        Self::new(xi0, xi1, MissingnessForm::Entropy)
    }

    pub fn discriminant(xi0: f64, xi1: f64) -> Self {
        Self::new(xi0, xi1, MissingnessForm::Discriminant)
    }

    /// `xi0 + xi1 * c`, taking the limit when the covariate is `-inf`.
    #[inline]
    pub fn linear_predictor(&self, covariate: f64) -> f64 {
        if covariate == f64::NEG_INFINITY {
            if self.xi1 > 0.0 {
                f64::NEG_INFINITY
            } else if self.xi1 < 0.0 {
                f64::INFINITY
            } else {
                self.xi0
            }
        } else {
            self.xi0 + self.xi1 * covariate
        }
    }
}

/// Coefficients of `d(y) = beta0 + beta1' y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantCoeffs {
    pub beta0: f64,
    pub beta1: Vec<f64>,
}

/// Discriminant coefficients of a two-class homoscedastic mixture:
/// `beta1 = Sigma^-1 (mu1 - mu2)`, `beta0 = log(pi1/pi2) - (mu1 + mu2)' beta1 / 2`.
pub fn beta_from_theta(theta: &MixtureParams) -> Result<DiscriminantCoeffs> {
    if theta.g() != 2 {
        return Err(Error::Unsupported(format!("discriminant needs g = 2, got {}", theta.g())));
    }
    if !theta.is_homoscedastic(1e-8) {
        return Err(Error::Unsupported("discriminant needs equal covariances".into()));
    }
    let diff: DVector<f64> = theta.mean(0) - theta.mean(1);
    let chol = nalgebra::Cholesky::new(theta.covariance(0).clone()).ok_or(Error::NotPositiveDefinite { index: 0 })?;
    let beta1 = chol.solve(&diff);
    let sum: DVector<f64> = theta.mean(0) + theta.mean(1);
    let w = theta.weights();
    let beta0 = (w[0] / w[1]).ln() - 0.5 * sum.dot(&beta1);
    Ok(DiscriminantCoeffs { beta0, beta1: beta1.iter().copied().collect() })
}

pub fn discriminant(beta: &DiscriminantCoeffs, y: &[f64]) -> Result<f64> {
    if y.len() != beta.beta1.len() {
        return Err(Error::Dimension { expected: beta.beta1.len(), got: y.len() });
    }
    Ok(beta.beta0 + beta.beta1.iter().zip(y).map(|(b, v)| b * v).sum::<f64>())
}

/// Second-order expansion of the two-class log entropy in the discriminant:
/// `log(log 2) - d^2 / (8 log 2)`, with error `O(d^4)`.
pub fn taylor_log_entropy(d: f64) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    ln2.ln() - d * d / (8.0 * ln2)
}

/// The mechanism bound to one parameter value, with the discriminant
/// coefficients precomputed when needed.
#[derive(Clone, Debug)]
pub struct Mechanism<'a> {
    theta: &'a MixtureParams,
    xi: MissingnessParams,
    beta: Option<DiscriminantCoeffs>,
}

impl<'a> Mechanism<'a> {
    pub fn new(theta: &'a MixtureParams, xi: MissingnessParams) -> Result<Self> {
        let beta = match xi.form {
            MissingnessForm::Entropy => None,
            MissingnessForm::Discriminant => Some(beta_from_theta(theta)?),
        };
        Ok(Self { theta, xi, beta })
    }

    pub fn xi(&self) -> MissingnessParams {
        self.xi
    }

    /// Covariate given the observation and its weighted log densities.
    #[inline]
    pub(crate) fn covariate_with(&self, y: &[f64], weighted_logs: &[f64]) -> f64 {
        match &self.beta {
            None => log_entropy_from_weighted(weighted_logs),
            Some(b) => {
                let d = b.beta0 + b.beta1.iter().zip(y).map(|(c, v)| c * v).sum::<f64>();
                d * d
            }
        }
    }

    pub fn covariate(&self, y: &[f64]) -> Result<f64> {
        let l = self.theta.weighted_log_densities(y)?;
        Ok(self.covariate_with(y, &l))
    }

    pub fn prob(&self, y: &[f64]) -> Result<f64> {
        Ok(logistic(self.xi.linear_predictor(self.covariate(y)?)))
    }

    /// `(log q, log(1 - q))` given precomputed weighted log densities.
    #[inline]
    pub(crate) fn log_probs_with(&self, y: &[f64], weighted_logs: &[f64]) -> (f64, f64) {
        let eta = self.xi.linear_predictor(self.covariate_with(y, weighted_logs));
        (log_logistic(eta), log1m_logistic(eta))
    }
}

/// Probability that the label of `y` is missing.
pub fn missing_prob(theta: &MixtureParams, xi: &MissingnessParams, y: &[f64]) -> Result<f64> {
    Mechanism::new(theta, *xi)?.prob(y)
}

/// Draws missing-label flags for a fully labeled sample and hides the flagged
/// labels. The hidden labels are returned in a separate sidecar.
pub fn simulate_missing_flags<R: Rng + ?Sized>(
    theta: &MixtureParams,
    xi: &MissingnessParams,
    sample: &PartialSample,
    rng: &mut R,
) -> Result<(PartialSample, GroundTruth)> {
    if !sample.is_fully_labeled() {
        return Err(Error::Contract("missing flags are simulated on a fully labeled sample".into()));
    }
    let mech = Mechanism::new(theta, *xi)?;
    let mut flags = Vec::with_capacity(sample.n());
    for y in sample.rows() {
        let q = mech.prob(y)?;
        let u: f64 = rng.random();
        flags.push(u < q);
    }
    sample.hide_labels(&flags)
}

/// Expected missing proportion with an optional Monte Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub value: f64,
    /// Quadrature error estimate or Monte Carlo standard error.
    pub error: f64,
}

/// Expected missing proportion in the canonical two-class model by quadrature
/// over the first coordinate (the covariate depends on no other).
pub fn gamma_quadrature(canon: &CanonicalTwoClass, xi: &MissingnessParams) -> Result<GammaEstimate> {
    let delta = canon.delta;
    let pi1 = canon.pi1;
    let lam = canon.log_odds();
    let (lp1, lp2) = (pi1.ln(), (1.0 - pi1).ln());
    let half = delta / 2.0;
    let xi = *xi;
    let integrand = |y: f64| {
        let l =
            [lp1 - 0.5 * (y - half) * (y - half) - 0.5 * LN_2PI, lp2 - 0.5 * (y + half) * (y + half) - 0.5 * LN_2PI];
        let c = match xi.form {
            MissingnessForm::Entropy => log_entropy_from_weighted(&l),
            MissingnessForm::Discriminant => {
                let d = lam + delta * y;
                d * d
            }
        };
        logistic(xi.linear_predictor(c)) * (l[0].exp() + l[1].exp())
    };
    let bound = half + 10.0;
    // the covariate varies fastest near the decision boundary y = -lam / delta
    let finest = 0.05 / (1.0 + delta * (1.0 + xi.xi1.abs().sqrt()));
    let breaks = centered_breaks(-bound, bound, -lam / delta, finest, 0.5);
    let r = integrate_panels(integrand, &breaks, QuadOptions { abs_tol: 1e-10, max_intervals: 4000 })?;
    Ok(GammaEstimate { value: r.value, error: r.error })
}

/// Monte Carlo estimate of the expected missing proportion under any mixture.
pub fn gamma_monte_carlo<R: Rng + ?Sized>(
    theta: &MixtureParams,
    xi: &MissingnessParams,
    draws: usize,
    rng: &mut R,
) -> Result<GammaEstimate> {
    if draws < 100_000 {
        return Err(Error::InvalidParameter(format!("Monte Carlo gamma needs at least 1e5 draws, got {draws}")));
    }
    let mech = Mechanism::new(theta, *xi)?;
    let mut y = vec![0.0; theta.p()];
    let (mut s, mut ss) = (0.0, 0.0);
    for _ in 0..draws {
        let k = theta.sample_class(rng);
        theta.sample_component(k, rng, &mut y);
        let q = mech.prob(&y)?;
        s += q;
        ss += q * q;
    }
    let n = draws as f64;
    let mean = s / n;
    let var = (ss / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(GammaEstimate { value: mean, error: (var / n).sqrt() })
}

/// Maximizes the flag log-likelihood over `xi` with `theta` held fixed
/// (two-parameter logistic regression of the flags on the covariate).
///
/// Complete separation pushes the coefficients towards infinity; the Newton
/// iteration is then stopped after a bounded number of steps.
pub fn fit_mechanism(
    theta: &MixtureParams,
    sample: &PartialSample,
    form: MissingnessForm,
) -> Result<MissingnessParams> {
    let probe = Mechanism::new(theta, MissingnessParams::new(0.0, 1.0, form))?;
    let mut xs = Vec::with_capacity(sample.n());
    for y in sample.rows() {
        xs.push(probe.covariate(y)?.max(-745.0));
    }
    let flags = sample.missing_flags();
    Ok(logistic_regression_1d(&xs, &flags, form))
}

pub(crate) fn logistic_regression_1d(xs: &[f64], flags: &[bool], form: MissingnessForm) -> MissingnessParams {
    let n = xs.len();
    let k = flags.iter().filter(|&&m| m).count();
    if k == 0 || k == n {
        let frac = (k as f64 + 0.5) / (n as f64 + 1.0);
        return MissingnessParams::new(logit(frac), 0.0, form);
    }
    let loglik = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(flags)
            .map(|(&x, &m)| {
                let eta = a + b * x;
                if m {
                    log_logistic(eta)
                } else {
                    log1m_logistic(eta)
                }
            })
            .sum()
    };
    let mut a = logit(k as f64 / n as f64);
    let mut b = 0.0;
    let mut cur = loglik(a, b);
    for _ in 0..100 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &m) in xs.iter().zip(flags) {
            let q = logistic(a + b * x);
            let r = if m { 1.0 } else { 0.0 } - q;
            let w = q * (1.0 - q);
            g0 += r;
            g1 += r * x;
            h00 += w;
            h01 += w * x;
            h11 += w * x * x;
        }
        let ridge = 1e-10 * (1.0 + h00 + h11);
        h00 += ridge;
        h11 += ridge;
        let det = h00 * h11 - h01 * h01;
        if !(det > 0.0) {
            break;
        }
        let da = (h11 * g0 - h01 * g1) / det;
        let db = (h00 * g1 - h01 * g0) / det;
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let (na, nb) = (a + step * da, b + step * db);
            let nl = loglik(na, nb);
            if nl >= cur {
                improved = nl - cur > 1e-12 * (1.0 + cur.abs());
                a = na;
                b = nb;
                cur = nl;
                break;
            }
            step *= 0.5;
        }
        if !improved || a.abs() > 50.0 || b.abs() > 50.0 {
            break;
        }
    }
    MissingnessParams::new(a, b, form)
}
