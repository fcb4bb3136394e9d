use nalgebra::{DMatrix, DVector};

use super::likelihood::loglik_cc;
use super::FitResult;
use crate::error::{Error, Result};
use crate::model::{MixtureParams, PartialSample};

/// Weighted-moment maximizer given responsibilities `resp` (row-major `n x g`).
///
/// With `homoscedastic` the class covariances are replaced by their
/// weight-averaged pool. A covariance that fails to factorize gets one ridge
/// retry with `1e-6 * trace / p` on the diagonal.
pub(crate) fn weighted_moments(
    sample: &PartialSample,
    resp: &[f64],
    g: usize,
    homoscedastic: bool,
) -> Result<MixtureParams> {
    let p = sample.p();
    let mut nk = vec![0.0; g];
    let mut sums = vec![DVector::<f64>::zeros(p); g];
    for (j, y) in sample.rows().enumerate() {
        let r = &resp[j * g..(j + 1) * g];
        for k in 0..g {
            if r[k] != 0.0 {
                nk[k] += r[k];
                for i in 0..p {
                    sums[k][i] += r[k] * y[i];
                }
            }
        }
    }
    for (k, &c) in nk.iter().enumerate() {
        if !(c > 0.0) {
            return Err(Error::Singularity { class: k + 1 });
        }
    }
    let means: Vec<DVector<f64>> = sums.into_iter().zip(&nk).map(|(s, &c)| s / c).collect();
    let mut covs = vec![DMatrix::<f64>::zeros(p, p); g];
    let mut d = vec![0.0; p];
    for (j, y) in sample.rows().enumerate() {
        let r = &resp[j * g..(j + 1) * g];
        for k in 0..g {
            if r[k] == 0.0 {
                continue;
            }
            for i in 0..p {
                d[i] = y[i] - means[k][i];
            }
            let cov = &mut covs[k];
            for a in 0..p {
                for b in 0..=a {
                    cov[(a, b)] += r[k] * d[a] * d[b];
                }
            }
        }
    }
    for (cov, &c) in covs.iter_mut().zip(&nk) {
        for a in 0..p {
            for b in 0..=a {
                let v = cov[(a, b)] / c;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
    }
    if homoscedastic {
        let total: f64 = nk.iter().sum();
        let mut pooled = DMatrix::<f64>::zeros(p, p);
        for (cov, &c) in covs.iter().zip(&nk) {
            pooled += cov * (c / total);
        }
        covs = vec![pooled; g];
    }
    let total: f64 = nk.iter().sum();
    let mut weights: Vec<f64> = nk.iter().map(|c| c / total).collect();
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    assemble_with_ridge(weights, means, covs)
}

fn assemble_with_ridge(
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    mut covs: Vec<DMatrix<f64>>,
) -> Result<MixtureParams> {
    let mean_rows = |m: &[DVector<f64>]| m.iter().map(|v| v.iter().copied().collect()).collect::<Vec<Vec<f64>>>();
    match MixtureParams::new(weights.clone(), mean_rows(&means), covs.clone()) {
        Ok(t) => Ok(t),
        Err(Error::NotPositiveDefinite { .. }) => {
            for c in covs.iter_mut() {
                if nalgebra::Cholesky::new(c.clone()).is_none() {
                    let p = c.nrows();
                    let eps = 1e-6 * c.trace().abs().max(f64::MIN_POSITIVE) / p as f64;
                    for i in 0..p {
                        c[(i, i)] += eps;
                    }
                }
            }
            MixtureParams::new(weights, mean_rows(&means), covs).map_err(|e| match e {
                Error::NotPositiveDefinite { index } => Error::Singularity { class: index + 1 },
                other => other,
            })
        }
        Err(e) => Err(e),
    }
}

/// One-hot responsibilities for a fully labeled sample.
pub(crate) fn one_hot(sample: &PartialSample, g: usize) -> Vec<f64> {
    let mut resp = vec![0.0; sample.n() * g];
    for (j, l) in sample.labels().iter().enumerate() {
        if let Some(z) = l {
            resp[j * g + z - 1] = 1.0;
        }
    }
    resp
}

/// Closed-form maximizer of the complete-data likelihood: class frequencies,
/// class means and class covariances with divisor `n_i` (pooled when
/// `homoscedastic`).
pub fn fit_cc(sample: &PartialSample, g: usize, homoscedastic: bool) -> Result<FitResult> {
    if !sample.is_fully_labeled() {
        return Err(Error::Contract("closed-form fit needs every label".into()));
    }
    sample.validate_for(g)?;
    let required = sample.p() + 1;
    for (k, &c) in sample.class_counts(g).iter().enumerate() {
        if c < required {
            return Err(Error::EmptyClass { class: k + 1, count: c, required });
        }
    }
    let theta = weighted_moments(sample, &one_hot(sample, g), g, homoscedastic)?;
    let ll = loglik_cc(&theta, sample)?;
    Ok(FitResult {
        theta_hat: theta,
        xi_hat: None,
        final_loglik: ll,
        iterations: 0,
        converged: true,
        loglik_trace: vec![ll],
    })
}
