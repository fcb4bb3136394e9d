use serde::{Deserialize, Serialize};

use super::moments::weighted_moments;
use super::FitResult;
use crate::classifier::normalize_log;
use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::model::{MixtureParams, PartialSample};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    /// Stop when `|l_t - l_{t-1}| <= tol * |l_{t-1}|`.
    pub tol: f64,
    pub max_iter: usize,
    pub homoscedastic: bool,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, homoscedastic: false }
    }
}

/// E-step: responsibilities (labeled rows one-hot) and the ignoring
/// log-likelihood at `theta`.
fn e_step(theta: &MixtureParams, sample: &PartialSample, resp: &mut [f64]) -> f64 {
    let g = theta.g();
    let mut ll = 0.0;
    for (j, (y, label)) in sample.rows().zip(sample.labels()).enumerate() {
        let r = &mut resp[j * g..(j + 1) * g];
        theta.weighted_log_densities_into(y, r);
        match label {
            Some(z) => {
                ll += r[z - 1];
                r.fill(0.0);
                r[z - 1] = 1.0;
            }
            None => {
                ll += log_sum_exp(r);
                normalize_log(r);
                r.iter_mut().for_each(|v| *v = v.exp());
            }
        }
    }
    ll
}

/// EM for the likelihood that ignores the missing-label mechanism. Labeled
/// rows keep their one-hot responsibilities throughout.
pub fn fit_ig(sample: &PartialSample, init: &MixtureParams, opts: &EmOptions) -> Result<FitResult> {
    if sample.p() != init.p() {
        return Err(Error::Dimension { expected: init.p(), got: sample.p() });
    }
    let g = init.g();
    sample.validate_for(g)?;
    let mut theta = init.clone();
    let mut resp = vec![0.0; sample.n() * g];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let ll = e_step(&theta, sample, &mut resp);
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            trace.push(ll);
            if (ll - prev).abs() <= opts.tol * prev.abs() {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        if iterations >= opts.max_iter {
            break;
        }
        theta = weighted_moments(sample, &resp, g, opts.homoscedastic)?;
        iterations += 1;
    }
    Ok(FitResult {
        theta_hat: theta,
        xi_hat: None,
        final_loglik: *trace.last().expect("trace has the initial value"),
        iterations,
        converged,
        loglik_trace: trace,
    })
}
