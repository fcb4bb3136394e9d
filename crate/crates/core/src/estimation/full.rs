use nalgebra::{DMatrix, DVector};

use super::likelihood::{loglik_full, Terms};
use super::optim::{minimize, BfgsOptions};
use super::FitResult;
use crate::error::{Error, Result};
use crate::missingness::{Mechanism, MissingnessForm, MissingnessParams};
use crate::model::{MixtureParams, PartialSample};

#[derive(Clone, Copy, Debug, Default)]
pub struct FullOptions {
    pub bfgs: BfgsOptions,
    /// One covariance shared by all components.
    pub homoscedastic: bool,
    /// Hold the mechanism at its initial value and optimize over theta only.
    pub fix_xi: bool,
}

/// Unconstrained coordinates: log-ratio weights against the last component,
/// raw means, Cholesky factors with log diagonals, then raw `xi`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    g: usize,
    p: usize,
    n_factors: usize,
    fit_xi: bool,
}

impl Layout {
    pub(crate) fn new(g: usize, p: usize, homoscedastic: bool, fit_xi: bool) -> Self {
        Self { g, p, n_factors: if homoscedastic { 1 } else { g }, fit_xi }
    }

    fn tri(&self) -> usize {
        self.p * (self.p + 1) / 2
    }

    pub(crate) fn len(&self) -> usize {
        (self.g - 1) + self.g * self.p + self.n_factors * self.tri() + if self.fit_xi { 2 } else { 0 }
    }

    pub(crate) fn encode(&self, theta: &MixtureParams, xi: &MissingnessParams) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        let w = theta.weights();
        let last = w[self.g - 1].ln();
        x.extend(w[..self.g - 1].iter().map(|v| v.ln() - last));
        for m in theta.means() {
            x.extend(m.iter());
        }
        let factors: Vec<DMatrix<f64>> = if self.n_factors == 1 {
            let mut pooled = DMatrix::<f64>::zeros(self.p, self.p);
            for (k, c) in theta.covariances().iter().enumerate() {
                pooled += c * w[k];
            }
            let pooled = (&pooled + pooled.transpose()) * 0.5;
            vec![nalgebra::Cholesky::new(pooled).map(|c| c.l()).unwrap_or_else(|| theta.cholesky(0).clone())]
        } else {
            (0..self.g).map(|k| theta.cholesky(k).clone()).collect()
        };
        for l in &factors {
            for i in 0..self.p {
                for j in 0..=i {
                    x.push(if i == j { l[(i, i)].ln() } else { l[(i, j)] });
                }
            }
        }
        if self.fit_xi {
            x.push(xi.xi0);
            x.push(xi.xi1);
        }
        x
    }

    /// `None` when the coordinates do not map to finite parameters.
    pub(crate) fn decode(&self, x: &[f64], xi_fixed: &MissingnessParams) -> Option<(MixtureParams, MissingnessParams)> {
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        let (g, p) = (self.g, self.p);
        let mut logw: Vec<f64> = x[..g - 1].to_vec();
        logw.push(0.0);
        let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = logw.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        if weights.iter().any(|w| !(*w > 0.0)) {
            return None;
        }
        let mut at = g - 1;
        let means: Vec<DVector<f64>> =
            (0..g).map(|k| DVector::from_column_slice(&x[at + k * p..at + (k + 1) * p])).collect();
        at += g * p;
        let mut factors = Vec::with_capacity(self.n_factors);
        for _ in 0..self.n_factors {
            let mut l = DMatrix::<f64>::zeros(p, p);
            for i in 0..p {
                for j in 0..=i {
                    l[(i, j)] = if i == j { x[at].exp() } else { x[at] };
                    at += 1;
                }
            }
            if l.diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
                return None;
            }
            factors.push(l);
        }
        if self.n_factors == 1 {
            factors = vec![factors[0].clone(); g];
        }
        let xi = if self.fit_xi { MissingnessParams::new(x[at], x[at + 1], xi_fixed.form) } else { *xi_fixed };
        Some((MixtureParams::from_factors(weights, means, factors), xi))
    }
}

fn objective(theta: &MixtureParams, xi: &MissingnessParams, sample: &PartialSample) -> f64 {
    match Mechanism::new(theta, *xi) {
        Ok(mech) => {
            let t = Terms::evaluate(theta, Some(&mech), sample);
            -(t.ig + t.miss)
        }
        Err(_) => f64::INFINITY,
    }
}

/// Maximizes the full log-likelihood over `(theta, xi)` by BFGS on the
/// unconstrained coordinates with finite-difference gradients.
///
/// The returned estimate is never worse than the initial value. A run that
/// fails the gradient test after all restarts comes back with
/// `converged = false` and the best iterate found.
pub fn fit_full(
    sample: &PartialSample,
    init_theta: &MixtureParams,
    init_xi: &MissingnessParams,
    opts: &FullOptions,
) -> Result<FitResult> {
    if sample.p() != init_theta.p() {
        return Err(Error::Dimension { expected: init_theta.p(), got: sample.p() });
    }
    sample.validate_for(init_theta.g())?;
    if init_xi.form == MissingnessForm::Discriminant && (!opts.homoscedastic || init_theta.g() != 2) {
        return Err(Error::Unsupported("discriminant mechanism needs a homoscedastic two-class fit".into()));
    }
    let layout = Layout::new(init_theta.g(), init_theta.p(), opts.homoscedastic, !opts.fix_xi);
    let x0 = layout.encode(init_theta, init_xi);
    let f = |x: &[f64]| match layout.decode(x, init_xi) {
        Some((th, xi)) => objective(&th, &xi, sample),
        None => f64::INFINITY,
    };
    let min = minimize(f, &x0, &opts.bfgs);
    let init_ll = loglik_full(init_theta, init_xi, sample).unwrap_or(f64::NEG_INFINITY);
    let decoded = layout.decode(&min.x, init_xi);
    let trace: Vec<f64> = min.trace.iter().map(|v| -v).collect();
    let (theta, xi, ll) = match decoded {
        Some((th, xi)) if min.f.is_finite() && -min.f >= init_ll => (th, xi, -min.f),
        _ => (init_theta.clone(), *init_xi, init_ll),
    };
    Ok(FitResult {
        theta_hat: theta,
        xi_hat: Some(xi),
        final_loglik: ll,
        iterations: min.iterations,
        converged: min.converged,
        loglik_trace: trace,
    })
}
