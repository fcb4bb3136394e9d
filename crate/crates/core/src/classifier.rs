//! Posterior probabilities, Shannon entropy, Bayes-rule allocation and error rates.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, std_normal_cdf};
use crate::model::{CanonicalTwoClass, MixtureParams, PartialSample};

/// Posterior class probabilities `tau_1..tau_g` for one observation.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorVector {
    values: Vec<f64>,
}

impl PosteriorVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("posterior entries must lie in [0, 1]".into()));
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("posterior sums to {s}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn g(&self) -> usize {
        self.values.len()
    }
}

/// Converts weighted log densities into log posteriors in place, returning the
/// log mixture density.
#[inline]
pub(crate) fn normalize_log(logs: &mut [f64]) -> f64 {
    let lse = log_sum_exp(logs);
    for l in logs.iter_mut() {
        *l -= lse;
    }
    lse
}

/// Log of the Shannon entropy of the posterior, computed from the weighted log
/// densities `l_k = log pi_k + log f_k(y)` without forming `1 - tau` explicitly.
///
/// Stays finite for points many standard deviations from the boundary, where
/// the entropy itself underflows.
pub fn log_entropy_from_weighted(l: &[f64]) -> f64 {
    let (kmax, m) =
        l.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let rest: f64 = l.iter().enumerate().filter(|&(k, _)| k != kmax).map(|(_, v)| (v - m).exp()).sum();
    let log_norm = rest.ln_1p();
    let mut terms: SmallVec<[f64; 8]> = SmallVec::with_capacity(l.len());
    for (k, &v) in l.iter().enumerate() {
        let neg_log_tau = if k == kmax { log_norm } else { m - v + log_norm };
        // tau * (-log tau), in log space
        if neg_log_tau > 0.0 && neg_log_tau.is_finite() {
            terms.push(-neg_log_tau + neg_log_tau.ln());
        }
    }
    log_sum_exp(&terms)
}

/// Posterior `tau_i(y) = pi_i f_i(y) / sum_h pi_h f_h(y)`.
pub fn posterior(theta: &MixtureParams, y: &[f64]) -> Result<PosteriorVector> {
    let mut l = theta.weighted_log_densities(y)?;
    normalize_log(&mut l);
    let mut values: Vec<f64> = l.iter().map(|v| v.exp()).collect();
    let s: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= s);
    Ok(PosteriorVector { values })
}

/// `-sum tau_i log tau_i` with `0 log 0 = 0`, natural log.
pub fn shannon_entropy(tau: &PosteriorVector) -> f64 {
    let h: f64 = tau.values.iter().filter(|&&t| t > 0.0).map(|&t| -t * t.ln()).sum();
    h.clamp(0.0, (tau.g() as f64).ln())
}

/// Log entropy of the posterior at `y` under `theta`.
pub fn log_entropy(theta: &MixtureParams, y: &[f64]) -> Result<f64> {
    Ok(log_entropy_from_weighted(&theta.weighted_log_densities(y)?))
}

#[inline]
pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k] > v[best] {
            best = k;
        }
    }
    best
}

/// Bayes rule of allocation. Returns the one-based class with maximal posterior;
/// ties go to the smallest index.
pub fn bayes_allocate(theta: &MixtureParams, y: &[f64]) -> Result<usize> {
    Ok(argmax_first(&theta.weighted_log_densities(y)?) + 1)
}

/// Holdout error summary for a fitted rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `1 - sum_i pi_i * rate_i`.
    pub overall: f64,
    /// Fraction of class-i holdout points allocated to class i.
    pub per_class: Vec<f64>,
    pub priors: Vec<f64>,
    pub holdout_size: usize,
}

impl ErrorReport {
    /// Builds the report from per-class rates and priors.
    pub fn from_rates(per_class: Vec<f64>, priors: Vec<f64>, holdout_size: usize) -> Self {
        let correct: f64 = per_class.iter().zip(&priors).map(|(r, p)| r * p).sum();
        Self { overall: 1.0 - correct, per_class, priors, holdout_size }
    }

    /// Flat `key=value` record, one field per line.
    pub fn to_record(&self) -> String {
        let mut s = format!("overall_error={:?}\nholdout_size={}\n", self.overall, self.holdout_size);
        for (i, r) in self.per_class.iter().enumerate() {
            s.push_str(&format!("class{}_rate={:?}\n", i + 1, r));
        }
        s
    }
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_record())
    }
}

/// Plug-in error of the rule `R(.; theta)` on a fully labeled holdout, with the
/// class priors taken from `theta`.
pub fn empirical_error_rate(theta: &MixtureParams, holdout: &PartialSample) -> Result<ErrorReport> {
    error_rate_with_priors(theta, holdout, theta.weights())
}

/// Same as [`empirical_error_rate`] but weighting the per-class rates with
/// caller-supplied priors (e.g. the generating model's weights).
pub fn error_rate_with_priors(theta: &MixtureParams, holdout: &PartialSample, priors: &[f64]) -> Result<ErrorReport> {
    let g = theta.g();
    if priors.len() != g {
        return Err(Error::Dimension { expected: g, got: priors.len() });
    }
    if holdout.p() != theta.p() {
        return Err(Error::Dimension { expected: theta.p(), got: holdout.p() });
    }
    let mut total = vec![0usize; g];
    let mut hit = vec![0usize; g];
    let mut buf = vec![0.0; g];
    for j in 0..holdout.n() {
        let z = holdout.label(j).ok_or_else(|| Error::Contract(format!("holdout row {j} has no label")))?;
        if z == 0 || z > g {
            return Err(Error::InvalidParameter(format!("label {z} outside 1..={g}")));
        }
        theta.weighted_log_densities_into(holdout.row(j), &mut buf);
        total[z - 1] += 1;
        if argmax_first(&buf) + 1 == z {
            hit[z - 1] += 1;
        }
    }
    if let Some(k) = total.iter().position(|&t| t == 0) {
        return Err(Error::EmptyClass { class: k + 1, count: 0, required: 1 });
    }
    let rates = hit.iter().zip(&total).map(|(&h, &t)| h as f64 / t as f64).collect();
    Ok(ErrorReport::from_rates(rates, priors.to_vec(), holdout.n()))
}

/// Fraction of rows whose allocation disagrees with the label.
pub fn misclassification_fraction(theta: &MixtureParams, sample: &PartialSample) -> Result<f64> {
    let mut wrong = 0usize;
    for j in 0..sample.n() {
        let z = sample.label(j).ok_or_else(|| Error::Contract(format!("row {j} has no label")))?;
        if bayes_allocate(theta, sample.row(j))? != z {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / sample.n().max(1) as f64)
}

/// Optimal error `Phi(-delta/2)` of the canonical equal-prior model.
pub fn optimal_error_two_class(canon: &CanonicalTwoClass) -> Result<f64> {
    if (canon.pi1 - 0.5).abs() > 1e-15 {
        return Err(Error::Unsupported(
            "closed-form optimal error needs pi1 = 0.5; use the Monte Carlo reference".into(),
        ));
    }
    Ok(std_normal_cdf(-canon.delta / 2.0))
}

/// Monte Carlo estimate of the Bayes-rule error of `theta` on its own
/// distribution, weighting class-conditional correct rates by its priors.
pub fn optimal_error_monte_carlo<R: Rng + ?Sized>(theta: &MixtureParams, n_ref: usize, rng: &mut R) -> f64 {
    let g = theta.g();
    let mut total = vec![0usize; g];
    let mut hit = vec![0usize; g];
    let mut y = vec![0.0; theta.p()];
    let mut buf = vec![0.0; g];
    for _ in 0..n_ref {
        let k = theta.sample_class(rng);
        theta.sample_component(k, rng, &mut y);
        theta.weighted_log_densities_into(&y, &mut buf);
        total[k] += 1;
        if argmax_first(&buf) == k {
            hit[k] += 1;
        }
    }
    let correct: f64 =
        (0..g).filter(|&k| total[k] > 0).map(|k| theta.weights()[k] * hit[k] as f64 / total[k] as f64).sum();
    1.0 - correct
}
