//! BFGS minimization with central finite-difference gradients.

use rand::Rng;

/// Settings for [`minimize`].
#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions {
    /// Converged when `max |grad| <= grad_tol * max(1, |f|)`.
    pub grad_tol: f64,
    /// Budget of gradient evaluations across all restarts.
    pub max_grad_evals: usize,
    /// Jittered restarts from the best point when a run stalls.
    pub restarts: usize,
    /// Relative size of the restart jitter.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-6, max_grad_evals: 1000, restarts: 3, jitter: 0.05, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_evals: usize,
    /// Objective value after every accepted step, starting at `x0`.
    pub trace: Vec<f64>,
}

/// Central differences with step `1e-6 * (1 + |x_i|)`.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], out: &mut [f64]) {
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

enum RunEnd {
    Converged,
    Stalled,
    Budget,
}

struct State {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    grad_evals: usize,
    trace: Vec<f64>,
}

fn bfgs_run<F: FnMut(&[f64]) -> f64>(f: &mut F, st: &mut State, opts: &BfgsOptions) -> RunEnd {
    let n = st.x.len();
    let mut g = vec![0.0; n];
    fd_gradient(f, &st.x, &mut g);
    st.grad_evals += 1;
    if !g.iter().all(|v| v.is_finite()) {
        return RunEnd::Stalled;
    }
    // inverse Hessian approximation, row-major
    let mut h = vec![0.0; n * n];
    let scale = 1.0 / inf_norm(&g).max(1.0);
    for i in 0..n {
        h[i * n + i] = scale;
    }
    let mut gn = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut xn = vec![0.0; n];
    loop {
        if inf_norm(&g) <= opts.grad_tol * st.f.abs().max(1.0) {
            return RunEnd::Converged;
        }
        if st.grad_evals >= opts.max_grad_evals {
            return RunEnd::Budget;
        }
        for i in 0..n {
            d[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            // lost descent: reset to scaled steepest descent
            h.fill(0.0);
            let s = 1.0 / inf_norm(&g).max(1.0);
            for i in 0..n {
                h[i * n + i] = s;
                d[i] = -s * g[i];
            }
            slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        }
        // backtracking with Armijo condition
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            for i in 0..n {
                xn[i] = st.x[i] + step * d[i];
            }
            let fv = sanitize(f(&xn));
            if fv <= st.f + 1e-4 * step * slope {
                accepted = Some(fv);
                break;
            }
            step *= 0.5;
        }
        let Some(fv) = accepted else {
            return RunEnd::Stalled;
        };
        fd_gradient(f, &xn, &mut gn);
        st.grad_evals += 1;
        if !gn.iter().all(|v| v.is_finite()) {
            return RunEnd::Stalled;
        }
        let s: Vec<f64> = (0..n).map(|i| xn[i] - st.x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let improvement = st.f - fv;
        st.x.copy_from_slice(&xn);
        st.f = fv;
        std::mem::swap(&mut g, &mut gn);
        st.iterations += 1;
        st.trace.push(fv);
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-12 * (ss * yy).sqrt() {
            if st.iterations == 1 {
                // rescale the initial approximation before the first update
                let gamma = sy / yy;
                h.fill(0.0);
                for i in 0..n {
                    h[i * n + i] = gamma;
                }
            }
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        if improvement <= 1e-14 * st.f.abs().max(1.0) && inf_norm(&s) <= 1e-12 * (1.0 + inf_norm(&st.x)) {
            return RunEnd::Stalled;
        }
    }
}

/// Minimizes `f` from `x0`. Non-finite objective values count as `+inf`.
///
/// The returned point is never worse than `x0`. If a run stalls before the
/// gradient test passes, up to `restarts` further runs start from the best
/// point jittered by `jitter * (1 + |x_i|)`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum {
    let f0 = sanitize(f(x0));
    let mut st = State { x: x0.to_vec(), f: f0, iterations: 0, grad_evals: 0, trace: vec![f0] };
    let mut rng = crate::rng::stream(&[opts.seed, crate::rng::tag("bfgs-restart")]);
    let mut converged = f0.is_finite() && matches!(bfgs_run(&mut f, &mut st, opts), RunEnd::Converged);
    let mut attempt = 0;
    while !converged && attempt < opts.restarts && st.grad_evals < opts.max_grad_evals {
        attempt += 1;
        let start: Vec<f64> =
            st.x.iter().map(|&v| v + opts.jitter * (1.0 + v.abs()) * rng.random_range(-1.0..=1.0)).collect();
        let fs = sanitize(f(&start));
        if !fs.is_finite() {
            continue;
        }
        let mut trial = State { x: start, f: fs, iterations: 0, grad_evals: st.grad_evals, trace: Vec::new() };
        let end = bfgs_run(&mut f, &mut trial, opts);
        st.grad_evals = trial.grad_evals;
        st.iterations += trial.iterations;
        if trial.f < st.f {
            st.x = trial.x;
            st.f = trial.f;
            st.trace.push(trial.f);
            converged = matches!(end, RunEnd::Converged);
        }
    }
    Minimum { x: st.x, f: st.f, converged, iterations: st.iterations, grad_evals: st.grad_evals, trace: st.trace }
}
