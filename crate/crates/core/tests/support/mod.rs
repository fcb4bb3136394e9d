//! Property checks and independent oracles shared by the integration tests
//! and the acceptance binary. Every check returns `Err(reason)` on violation.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use mixmiss::classifier::{bayes_allocate, log_entropy, posterior, shannon_entropy, PosteriorVector};
use mixmiss::estimation::{fit_cc, fit_ig, loglik_full, loglik_ig, loglik_miss, EmOptions, Estimator};
use mixmiss::harness::{bootstrap_se, kfold_cv, relative_efficiency, Baseline, FitSettings, ReplicationRecord};
use mixmiss::missingness::{gamma_monte_carlo, gamma_quadrature, simulate_missing_flags, taylor_log_entropy};
use mixmiss::rng::stream;
use mixmiss::{CanonicalTwoClass, MissingnessForm, MissingnessParams, MixtureParams, PartialSample};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub type Check = std::result::Result<(), String>;

pub fn rng(seed: u64, what: u64) -> impl Rng {
    stream(&[0xacce, seed, what])
}

fn normal<R: Rng>(r: &mut R) -> f64 {
    r.sample(StandardNormal)
}

/// Well-conditioned random mixture.
pub fn random_mixture<R: Rng>(r: &mut R, g: usize, p: usize) -> MixtureParams {
    let raw: Vec<f64> = (0..g).map(|_| 0.5 + r.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let means = (0..g).map(|_| (0..p).map(|_| 2.0 * normal(r)).collect()).collect();
    let covs = (0..g)
        .map(|_| {
            let l = DMatrix::from_fn(p, p, |_, _| 0.5 * normal(r));
            &l * l.transpose() + DMatrix::identity(p, p) * 0.3
        })
        .collect();
    MixtureParams::new(raw.iter().map(|w| w / total).collect(), means, covs).unwrap()
}

/// Hides each label independently with probability `rate`.
pub fn hide_random<R: Rng>(s: &PartialSample, rate: f64, r: &mut R) -> PartialSample {
    let flags: Vec<bool> = (0..s.n()).map(|_| r.random::<f64>() < rate).collect();
    s.hide_labels(&flags).unwrap().0
}

// ---- oracle arithmetic --------------------------------------------------

fn max_and_rest(l: &[f64]) -> (f64, f64) {
    let (imax, m) =
        l.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, v)| if v > a.1 { (i, v) } else { a });
    let rest: f64 = l.iter().enumerate().filter(|(i, _)| *i != imax).map(|(_, v)| (v - m).exp()).sum();
    (m, rest)
}

/// `log(sum exp l)` with the non-maximal terms summed through `ln_1p`.
pub fn lse(l: &[f64]) -> f64 {
    let (m, rest) = max_and_rest(l);
    m + rest.ln_1p()
}

/// Log posteriors without cancellation in the dominant term.
pub fn log_posteriors(l: &[f64]) -> Vec<f64> {
    let (m, rest) = max_and_rest(l);
    l.iter().map(|v| (v - m) - rest.ln_1p()).collect()
}

pub fn log_normal_density(y: &[f64], mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let p = y.len();
    let ch = cov.clone().cholesky().expect("covariance must be positive definite");
    let d = DVector::from_column_slice(y) - mean;
    let z = ch.l().solve_lower_triangular(&d).unwrap();
    let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (p as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + z.norm_squared())
}

pub fn weighted_logs(theta: &MixtureParams, y: &[f64]) -> Vec<f64> {
    (0..theta.g())
        .map(|k| theta.weights()[k].ln() + log_normal_density(y, theta.mean(k), theta.covariance(k)))
        .collect()
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Flag log-likelihood of the entropy-form mechanism, from scratch.
fn oracle_loglik_miss(theta: &MixtureParams, xi: &MissingnessParams, s: &PartialSample) -> f64 {
    assert_eq!(xi.form, MissingnessForm::Entropy);
    s.rows()
        .enumerate()
        .map(|(j, y)| {
            let en: f64 = log_posteriors(&weighted_logs(theta, y)).iter().map(|lt| -lt.exp() * lt).sum();
            let eta = xi.xi0 + xi.xi1 * en.ln();
            if s.is_missing(j) {
                log_sigmoid(eta)
            } else {
                log_sigmoid(-eta)
            }
        })
        .sum()
}

fn oracle_loglik_ig(theta: &MixtureParams, s: &PartialSample) -> f64 {
    s.rows()
        .zip(s.labels())
        .map(|(y, lab)| {
            let l = weighted_logs(theta, y);
            match lab {
                Some(z) => l[z - 1],
                None => lse(&l),
            }
        })
        .sum()
}

// ---- likelihood ---------------------------------------------------------

/// `full = ig + miss` to 1e-12 relative, with each part also matching an
/// independent evaluation to 1e-10 relative.
pub fn check_decomposition(seed: u64) -> Check {
    let mut r = rng(seed, 1);
    let (g, p) = (r.random_range(2..=3), r.random_range(1..=3));
    let theta = random_mixture(&mut r, g, p);
    let xi = MissingnessParams::entropy(r.random_range(-2.0..2.0), r.random_range(-2.0..3.0));
    let full_sample = theta.sample(r.random_range(20..120), &mut r);
    let (s, _) = simulate_missing_flags(&theta, &xi, &full_sample, &mut r).map_err(|e| e.to_string())?;
    let full = loglik_full(&theta, &xi, &s).map_err(|e| e.to_string())?;
    let ig = loglik_ig(&theta, &s).map_err(|e| e.to_string())?;
    let miss = loglik_miss(&theta, &xi, &s).map_err(|e| e.to_string())?;
    let scale = ig.abs() + miss.abs();
    if (full - ig - miss).abs() > 1e-12 * scale {
        return Err(format!("full {full} != ig {ig} + miss {miss}"));
    }
    let (oi, om) = (oracle_loglik_ig(&theta, &s), oracle_loglik_miss(&theta, &xi, &s));
    if (ig - oi).abs() > 1e-10 * oi.abs().max(1.0) || (miss - om).abs() > 1e-10 * om.abs().max(1.0) {
        return Err(format!("oracle mismatch: ig {ig} vs {oi}, miss {miss} vs {om}"));
    }
    Ok(())
}

/// EM never decreases the ignoring likelihood, from a perturbed start.
pub fn check_em_ascent(seed: u64) -> Check {
    let mut r = rng(seed, 2);
    let (g, p) = (r.random_range(2..=3), r.random_range(1..=3));
    let theta = random_mixture(&mut r, g, p);
    let complete = theta.sample(r.random_range(60..160), &mut r);
    let rate = r.random_range(0.2..0.9);
    let s = hide_random(&complete, rate, &mut r);
    let means: Vec<Vec<f64>> =
        (0..g).map(|k| theta.mean(k).iter().map(|m| m + 0.7 * normal(&mut r)).collect()).collect();
    let covs: Vec<DMatrix<f64>> = (0..g).map(|k| theta.covariance(k) * 1.5).collect();
    let init = MixtureParams::new(vec![1.0 / g as f64; g], means, covs).unwrap();
    let homoscedastic = r.random::<bool>();
    let init = if homoscedastic {
        let pooled = init.covariances().iter().fold(DMatrix::zeros(p, p), |a, c| a + c) / g as f64;
        MixtureParams::new(
            init.weights().to_vec(),
            (0..g).map(|k| init.mean(k).iter().copied().collect()).collect(),
            vec![pooled; g],
        )
        .unwrap()
    } else {
        init
    };
    let fit = fit_ig(&s, &init, &EmOptions { max_iter: 200, homoscedastic, ..Default::default() })
        .map_err(|e| e.to_string())?;
    for w in fit.loglik_trace.windows(2) {
        if w[1] < w[0] - 1e-9 * w[0].abs().max(1.0) {
            return Err(format!("loglik decreased from {} to {}", w[0], w[1]));
        }
    }
    Ok(())
}

// ---- classifier ---------------------------------------------------------

/// Posteriors are nonnegative, sum to one and match a log-space oracle,
/// including far from every component.
pub fn check_posterior(seed: u64) -> Check {
    let mut r = rng(seed, 3);
    let (g, p) = (r.random_range(2..=5), r.random_range(1..=4));
    let theta = random_mixture(&mut r, g, p);
    let scale = [1.0, 10.0, 1e3][r.random_range(0..3)];
    let y: Vec<f64> = (0..p).map(|_| scale * normal(&mut r)).collect();
    let tau = posterior(&theta, &y).map_err(|e| e.to_string())?;
    let sum: f64 = tau.values().iter().sum();
    if (sum - 1.0).abs() > 1e-12 || tau.values().iter().any(|&t| !(t >= 0.0)) {
        return Err(format!("posterior {:?} sums to {sum}", tau.values()));
    }
    let l = weighted_logs(&theta, &y);
    let norm = lse(&l);
    for (t, lk) in tau.values().iter().zip(&l) {
        if (t - (lk - norm).exp()).abs() > 1e-9 {
            return Err(format!("posterior {t} vs oracle {}", (lk - norm).exp()));
        }
    }
    Ok(())
}

/// `0 <= en <= log g`, with both ends attained.
pub fn check_entropy_bounds(seed: u64) -> Check {
    let mut r = rng(seed, 4);
    let g = r.random_range(1..=6);
    let raw: Vec<f64> = (0..g).map(|_| r.random::<f64>().powi(3)).collect();
    let total: f64 = raw.iter().sum();
    let tau = PosteriorVector::new(raw.iter().map(|v| v / total).collect()).map_err(|e| e.to_string())?;
    let en = shannon_entropy(&tau);
    let top = (g as f64).ln();
    if !(en >= 0.0 && en <= top + 1e-12) {
        return Err(format!("entropy {en} outside [0, {top}]"));
    }
    let uniform = shannon_entropy(&PosteriorVector::new(vec![1.0 / g as f64; g]).unwrap());
    let mut hot = vec![0.0; g];
    hot[r.random_range(0..g)] = 1.0;
    let zero = shannon_entropy(&PosteriorVector::new(hot).unwrap());
    if (uniform - top).abs() > 1e-12 || zero != 0.0 {
        return Err(format!("equality cases: uniform {uniform} vs {top}, one-hot {zero}"));
    }
    Ok(())
}

/// Entropy at a fixed point with `y1 != 0` falls strictly as the canonical
/// separation grows over 0.1, 0.2, ..., 10.
pub fn check_entropy_monotone(seed: u64) -> Check {
    let mut r = rng(seed, 5);
    let p = r.random_range(1..=3);
    let mut y: Vec<f64> = (0..p).map(|_| normal(&mut r)).collect();
    y[0] = r.random_range(0.05..3.0) * if r.random::<bool>() { 1.0 } else { -1.0 };
    let mut prev = f64::INFINITY;
    for i in 1..=100 {
        let delta = 0.1 * i as f64;
        let th = CanonicalTwoClass::new(delta, p, 0.5).unwrap().to_mixture();
        let en = shannon_entropy(&posterior(&th, &y).unwrap());
        if !(en < prev) {
            return Err(format!("entropy {en} at delta {delta} not below {prev} (y1 = {})", y[0]));
        }
        prev = en;
    }
    Ok(())
}

/// Least-squares slope of `log |log en(d) - taylor(d)|` against `log d` over
/// twelve log-spaced points in `[0.05, 0.4]`.
pub fn taylor_slope() -> f64 {
    let th = CanonicalTwoClass::new(1.0, 1, 0.5).unwrap().to_mixture();
    let pts: Vec<(f64, f64)> = (0..12)
        .map(|i| {
            let d = 0.05 * 8f64.powf(i as f64 / 11.0);
            let err = (log_entropy(&th, &[d]).unwrap() - taylor_log_entropy(d)).abs();
            (d.ln(), err.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Allocation is unchanged when data and parameters go through the same
/// invertible affine map.
pub fn check_affine(seed: u64) -> Check {
    let mut r = rng(seed, 6);
    let (g, p) = (r.random_range(2..=4), r.random_range(1..=3));
    let theta = random_mixture(&mut r, g, p);
    let a = DMatrix::from_fn(p, p, |i, j| normal(&mut r) + if i == j { 3.0 } else { 0.0 });
    let b = DVector::from_fn(p, |_, _| 5.0 * normal(&mut r));
    let mapped = MixtureParams::new(
        theta.weights().to_vec(),
        (0..g).map(|k| (&a * theta.mean(k) + &b).iter().copied().collect()).collect(),
        (0..g).map(|k| &a * theta.covariance(k) * a.transpose()).collect(),
    )
    .map_err(|e| e.to_string())?;
    for _ in 0..50 {
        let y: Vec<f64> = (0..p).map(|_| 3.0 * normal(&mut r)).collect();
        let mut tau = posterior(&theta, &y).unwrap().values().to_vec();
        tau.sort_by(|x, y| y.total_cmp(x));
        if tau[0] - tau[1] < 1e-8 {
            continue;
        }
        let z: Vec<f64> = (&a * DVector::from_column_slice(&y) + &b).iter().copied().collect();
        let (k1, k2) = (bayes_allocate(&theta, &y).unwrap(), bayes_allocate(&mapped, &z).unwrap());
        if k1 != k2 {
            return Err(format!("allocation {k1} became {k2} under the map"));
        }
    }
    Ok(())
}

// ---- complete-data fit vs a numerical maximizer ------------------------

/// Downhill simplex minimizer.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: f64, max_evals: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = n + 1;
    while evals < max_evals {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        if (vals[n] - vals[0]).abs() <= 1e-13 * (1.0 + vals[0].abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[n] = xe;
                vals[n] = fe;
            } else {
                simplex[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = xr;
            vals[n] = fr;
        } else {
            let t = if fr < vals[n] { -0.5 } else { 0.5 };
            let xc = along(t);
            let fc = f(&xc);
            evals += 1;
            if fc < vals[n].min(fr) {
                simplex[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    vals[i] = f(&simplex[i]);
                }
                evals += n;
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (simplex[best].clone(), vals[best])
}

/// Two-class heteroscedastic parameters from an unconstrained vector: weight
/// logit, means, then lower Cholesky factors with log diagonals.
fn decode_two_class(x: &[f64], p: usize) -> (f64, Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
    let w1 = 1.0 / (1.0 + (-x[0]).exp());
    let mut at = 1;
    let mut means = Vec::new();
    for _ in 0..2 {
        means.push(DVector::from_column_slice(&x[at..at + p]));
        at += p;
    }
    let mut covs = Vec::new();
    for _ in 0..2 {
        let mut l = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..=i {
                l[(i, j)] = if i == j { x[at].exp() } else { x[at] };
                at += 1;
            }
        }
        covs.push(&l * l.transpose());
    }
    (w1, means, covs)
}

/// `fit_cc` agrees with simplex maximization of the complete-data
/// likelihood to 1e-3 in every parameter (n = 50, p = 2, g = 2).
pub fn check_fit_cc_numeric(seed: u64) -> Check {
    let mut r = rng(seed, 7);
    let p = 2;
    let theta = random_mixture(&mut r, 2, p);
    let s = loop {
        let s = theta.sample(50, &mut r);
        if s.class_counts(2).iter().all(|&c| c >= 8) {
            break s;
        }
    };
    let fit = fit_cc(&s, 2, false).map_err(|e| e.to_string())?.theta_hat;
    let rows: Vec<(Vec<f64>, usize)> = s.rows().zip(s.labels()).map(|(y, l)| (y.to_vec(), l.unwrap() - 1)).collect();
    let negll = |x: &[f64]| {
        let (w1, means, covs) = decode_two_class(x, p);
        let lw = [w1.ln(), (1.0 - w1).ln()];
        -rows.iter().map(|(y, k)| lw[*k] + log_normal_density(y, &means[*k], &covs[*k])).sum::<f64>()
    };
    let mut x = vec![0.0; 1 + 2 * p + p * (p + 1)];
    let mut best = f64::INFINITY;
    for round in 0..30 {
        let (nx, v) = nelder_mead(&negll, &x, if round == 0 { 1.0 } else { 0.1 }, 20_000);
        let done = (best - v).abs() < 1e-12;
        x = nx;
        best = v;
        if done {
            break;
        }
    }
    let (w1, means, covs) = decode_two_class(&x, p);
    let mut worst: f64 = (w1 - fit.weights()[0]).abs();
    for k in 0..2 {
        worst = worst.max((&means[k] - fit.mean(k)).amax());
        worst = worst.max((&covs[k] - fit.covariance(k)).amax());
    }
    if worst > 1e-3 {
        return Err(format!("closed form and simplex maximizer differ by {worst:.3e}"));
    }
    Ok(())
}

// ---- missing proportion --------------------------------------------------

/// Canonical-model quadrature of the expected missing proportion lies within
/// three standard errors of a 2e5-draw Monte Carlo estimate.
pub fn check_gamma_quad_vs_mc(seed: u64) -> Check {
    let mut r = rng(seed, 8);
    let delta = r.random_range(0.3..5.0);
    let pi1 = r.random_range(0.2..0.8);
    let xi = if r.random::<bool>() {
        MissingnessParams::entropy(r.random_range(-2.0..3.0), r.random_range(-2.0..5.0))
    } else {
        MissingnessParams::discriminant(r.random_range(-1.0..2.0), r.random_range(-3.0..0.5))
    };
    let canon = CanonicalTwoClass::new(delta, 2, pi1).unwrap();
    let q = gamma_quadrature(&canon, &xi).map_err(|e| e.to_string())?;
    let mc = gamma_monte_carlo(&canon.to_mixture(), &xi, 200_000, &mut r).map_err(|e| e.to_string())?;
    if (q.value - mc.value).abs() > 3.0 * mc.error + q.error {
        return Err(format!("quadrature {} vs Monte Carlo {} +- {}", q.value, mc.value, mc.error));
    }
    Ok(())
}

// ---- harness oracles ----------------------------------------------------

pub fn record(i: usize, reference: f64, cc: f64, ig: f64, full: f64) -> ReplicationRecord {
    ReplicationRecord {
        replication: i,
        missing_fraction: 0.5,
        true_rule_error: reference,
        errors: [(Estimator::Cc, cc), (Estimator::Ig, ig), (Estimator::Full, full)]
            .into_iter()
            .collect::<BTreeMap<_, _>>(),
        nonconverged: vec![],
        failures: vec![],
    }
}

/// Standard deviation over every ordered resample of `records`, each equally
/// likely, skipping resamples where the ratio is undefined.
pub fn exhaustive_bootstrap_sd(records: &[ReplicationRecord], num: Estimator, baseline: Baseline) -> Option<f64> {
    let n = records.len();
    let total = n.pow(n as u32);
    let mut vals = Vec::new();
    for code in 0..total {
        let mut c = code;
        let draw: Vec<ReplicationRecord> = (0..n)
            .map(|_| {
                let i = c % n;
                c /= n;
                records[i].clone()
            })
            .collect();
        if let Some(v) = relative_efficiency(&draw, num, Estimator::Full, baseline) {
            vals.push(v);
        }
    }
    (!vals.is_empty()).then(|| {
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
    })
}

/// Bootstrap standard errors over 1e5 resamples match the exhaustive
/// enumeration to 2% for three records.
pub fn check_bootstrap_oracle(seed: u64) -> Check {
    let mut r = rng(seed, 9);
    let reference = 0.1;
    let recs: Vec<ReplicationRecord> = (0..3)
        .map(|i| {
            let full = reference + r.random_range(0.001..0.02);
            record(i, reference, full + r.random_range(0.0..0.05), full + r.random_range(-0.005..0.03), full)
        })
        .collect();
    let base = Baseline::Fixed(reference);
    let (cc, ig) = bootstrap_se(&recs, 100_000, seed, base);
    for (got, num) in [(cc, Estimator::Cc), (ig, Estimator::Ig)] {
        let want = exhaustive_bootstrap_sd(&recs, num, base);
        match (got, want) {
            (Some(a), Some(b)) if (a - b).abs() <= 0.02 * b + 1e-12 => {}
            (None, None) => {}
            other => return Err(format!("{num}: bootstrap {:?} vs exhaustive {:?}", other.0, other.1)),
        }
    }
    Ok(())
}

/// Leave-one-out error of the complete-data rule (k = n) against a
/// quadratic discriminant refitted from scratch for every held-out row.
pub fn check_loo_cv(seed: u64) -> Check {
    let mut r = rng(seed, 10);
    let delta = r.random_range(1.0..3.0);
    let theta = CanonicalTwoClass::new(delta, 2, 0.5).unwrap().to_mixture();
    let s = loop {
        let s = theta.sample(30, &mut r);
        if s.class_counts(2).iter().all(|&c| c >= 5) {
            break s;
        }
    };
    let settings = FitSettings { homoscedastic: false, max_grad_evals: 100, seed: 0 };
    let got = kfold_cv(&s, &s, 2, s.n(), Estimator::Cc, MissingnessForm::Entropy, &settings, seed)
        .map_err(|e| e.to_string())?;
    let mut wrong = 0;
    for out in 0..s.n() {
        let mut score = [0.0; 2];
        for k in 0..2 {
            let rows: Vec<&[f64]> =
                (0..s.n()).filter(|&j| j != out && s.label(j) == Some(k + 1)).map(|j| s.row(j)).collect();
            let m = rows.len() as f64;
            let mean = rows.iter().fold(DVector::zeros(2), |a, y| a + DVector::from_column_slice(y)) / m;
            let cov = rows.iter().fold(DMatrix::zeros(2, 2), |a, y| {
                let d = DVector::from_column_slice(y) - &mean;
                a + &d * d.transpose()
            }) / m;
            score[k] = (m / (s.n() - 1) as f64).ln() + log_normal_density(s.row(out), &mean, &cov);
        }
        let pick = if score[1] > score[0] { 2 } else { 1 };
        if Some(pick) != s.label(out) {
            wrong += 1;
        }
    }
    let want = wrong as f64 / s.n() as f64;
    if (got - want).abs() > 1e-12 {
        return Err(format!("cv {got} vs leave-one-out oracle {want}"));
    }
    Ok(())
}

/// Runs `check` over `cases` seeds and reports the first failure.
pub fn run_cases(cases: u64, check: fn(u64) -> Check) -> Check {
    for seed in 0..cases {
        check(seed).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(())
}

// ---- efficiency scalars ---------------------------------------------------

/// `(c0, b0, gamma * d0)` by the composite trapezoid rule with `points` nodes
/// on `[-(delta/2 + 10), delta/2 + 10]`, equal priors.
pub fn trapezoid_scalars(delta: f64, xi0: f64, xi1: f64, points: usize) -> (f64, f64, f64) {
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let b = delta / 2.0 + 10.0;
    let h = 2.0 * b / (points - 1) as f64;
    let (mut c0, mut b0, mut gd0) = (0.0, 0.0, 0.0);
    for i in 0..points {
        let y = -b + h * i as f64;
        let w = if i == 0 || i == points - 1 { 0.5 * h } else { h };
        let (f1, f2) = (0.5 * phi(y - delta / 2.0), 0.5 * phi(y + delta / 2.0));
        let f = f1 + f2;
        let q = sig(xi0 + xi1 * delta * delta * y * y);
        c0 += w * phi(y) * (-delta * delta / 8.0).exp() / (delta * y / 2.0).cosh();
        b0 += w * 4.0 * xi1 * xi1 * delta * delta * y * y * q * (1.0 - q) * f;
        gd0 += w * (f1 / f) * (f2 / f) * q * f;
    }
    (c0, b0, gd0)
}

/// Random point of the efficiency grid ranges: `delta` in `[0.5, 10]`, `xi0` in
/// `[0.1, 1]`, `xi1` in `[-5, -0.1]`.
pub fn random_are_point(seed: u64) -> (f64, f64, f64) {
    let mut r = rng(seed, 11);
    (r.random_range(0.5..10.0), r.random_range(0.1..1.0), r.random_range(-5.0..-0.1))
}

/// Adaptive quadrature of `c0`, `b0` and `gamma d0` against the 1e6-point
/// trapezoid oracle, to 1e-6 absolute.
pub fn check_quadrature_oracle(seed: u64) -> Check {
    use mixmiss::asymptotics::{quad_b0, quad_c0, quad_gamma_d0};
    let (delta, xi0, xi1) = random_are_point(seed);
    let xi = MissingnessParams::discriminant(xi0, xi1);
    let (c0, b0, gd0) = trapezoid_scalars(delta, xi0, xi1, 1_000_000);
    let got = (
        quad_c0(delta).map_err(|e| e.to_string())?,
        quad_b0(delta, &xi).map_err(|e| e.to_string())?,
        quad_gamma_d0(delta, &xi).map_err(|e| e.to_string())?,
    );
    for (name, a, b) in [("c0", got.0, c0), ("b0", got.1, b0), ("gamma*d0", got.2, gd0)] {
        if (a - b).abs() > 1e-6 {
            return Err(format!("{name} at delta={delta:.3}, xi=({xi0:.3},{xi1:.3}): {a} vs oracle {b}"));
        }
    }
    Ok(())
}
