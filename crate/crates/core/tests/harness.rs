mod support;

use mixmiss::classifier::log_entropy;
use mixmiss::estimation::Estimator;
use mixmiss::harness::*;
use mixmiss::math::std_normal_cdf;
use mixmiss::missingness::simulate_missing_flags;
use mixmiss::rng::seeded;
use mixmiss::{CanonicalTwoClass, MissingnessForm, MissingnessParams, PartialSample};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn cc_settings() -> FitSettings {
    FitSettings { homoscedastic: false, max_grad_evals: 200, seed: 0 }
}

fn canonical_sample(delta: f64, n: usize, seed: u64) -> PartialSample {
    CanonicalTwoClass::new(delta, 2, 0.5).unwrap().to_mixture().sample_seeded(n, seed)
}

#[test]
fn complete_data_error_near_optimum_at_large_n() {
    let mut cfg = StudyConfig::new(
        "err-cc",
        ModelSpec::Canonical { delta: 2.5, p: 2, pi1: 0.5 },
        MissingnessParams::entropy(-30.0, 0.0),
        5000,
        1,
        3,
    );
    cfg.estimators = vec![Estimator::Cc];
    let rec = run_replication(&cfg, 0).unwrap();
    let err = rec.error(Estimator::Cc).unwrap();
    assert!((err - 0.10565).abs() < 0.02, "{err}");
    assert!((std_normal_cdf(-1.25) - 0.10565).abs() < 1e-5);
}

#[test]
fn fivefold_cv_approaches_optimal_error() {
    let s = canonical_sample(1.0, 2000, 21);
    let e = kfold_cv(&s, &s, 2, 5, Estimator::Cc, MissingnessForm::Entropy, &cc_settings(), 4).unwrap();
    assert!((e - 0.3085).abs() < 0.05, "{e}");
}

#[test]
fn cv_error_falls_with_separation() {
    let at = |delta: f64| {
        let s = canonical_sample(delta, 2000, 22);
        kfold_cv(&s, &s, 2, 5, Estimator::Cc, MissingnessForm::Entropy, &cc_settings(), 4).unwrap()
    };
    assert!(at(3.0) < at(1.0));
}

#[test]
fn cv_on_partial_labels_runs_every_estimator() {
    let th = CanonicalTwoClass::new(3.0, 2, 0.5).unwrap().to_mixture();
    let s = th.sample_seeded(150, 8);
    let (vis, _) = simulate_missing_flags(&th, &MissingnessParams::entropy(0.0, 1.0), &s, &mut seeded(9)).unwrap();
    for est in Estimator::ALL {
        let e = kfold_cv(&vis, &s, 2, 5, est, MissingnessForm::Entropy, &cc_settings(), 1).unwrap();
        assert!((0.0..0.3).contains(&e), "{est}: {e}");
    }
}

#[test]
fn kernel_curve_matches_direct_weighted_average() {
    let th = CanonicalTwoClass::new(2.0, 2, 0.5).unwrap().to_mixture();
    let s = th.sample_seeded(400, 31);
    let (vis, _) = simulate_missing_flags(&th, &MissingnessParams::entropy(3.0, 1.0), &s, &mut seeded(32)).unwrap();
    let h = 0.4;
    let curve = nadaraya_watson_missing(&vis, &th, h).unwrap();
    let xs: Vec<f64> = vis.rows().map(|y| -log_entropy(&th, y).unwrap()).collect();
    for (x0, got) in curve.neg_log_entropy.iter().zip(&curve.missing_prob) {
        let (mut num, mut den) = (0.0, 0.0);
        for (j, x) in xs.iter().enumerate() {
            let w = (-0.5 * ((x0 - x) / h).powi(2)).exp();
            num += w * if vis.is_missing(j) { 1.0 } else { 0.0 };
            den += w;
        }
        assert!((got - num / den).abs() < 1e-10, "{got} vs {}", num / den);
    }
}

#[test]
fn kernel_curve_decreases_in_negative_log_entropy() {
    let th = CanonicalTwoClass::new(2.0, 2, 0.5).unwrap().to_mixture();
    let s = th.sample_seeded(5000, 41);
    let (vis, _) = simulate_missing_flags(&th, &MissingnessParams::entropy(3.0, 1.0), &s, &mut seeded(42)).unwrap();
    let c = nadaraya_watson_missing(&vis, &th, 0.5).unwrap();
    // the upper tail of the covariate is too sparse to pin the curve down
    let mut xs: Vec<f64> = vis.rows().map(|y| -log_entropy(&th, y).unwrap()).collect();
    xs.sort_by(f64::total_cmp);
    let q95 = xs[xs.len() * 95 / 100];
    let upto = c.neg_log_entropy.iter().filter(|&&x| x <= q95).count();
    let m = &c.missing_prob[..upto];
    assert!(upto > 50);
    assert!(m.windows(2).all(|w| w[1] < w[0]), "{m:?}");
    assert!(m[0] - m[upto - 1] > 0.3);
}

/// Largest eigenpair by power iteration, then deflation.
fn eigen_oracle(mut a: DMatrix<f64>, k: usize) -> Vec<(f64, Vec<f64>)> {
    let p = a.nrows();
    let mut out = Vec::new();
    for _ in 0..k {
        let mut v = nalgebra::DVector::from_fn(p, |i, _| 1.0 + i as f64 * 0.1);
        let mut lam = 0.0;
        for _ in 0..5000 {
            let w = &a * &v;
            lam = w.norm();
            v = w / lam;
        }
        a -= &v * v.transpose() * lam;
        out.push((lam, v.iter().copied().collect()));
    }
    out
}

#[test]
fn pca_matches_eigen_oracle_up_to_sign() {
    let mut r = seeded(5);
    let scales = [3.0, 2.0, 1.0, 0.5];
    let rows: Vec<Vec<f64>> = (0..300)
        .map(|_| {
            let z: Vec<f64> = scales.iter().map(|s| s * r.sample::<f64, _>(StandardNormal)).collect();
            vec![z[0] + z[1], z[0] - z[1] + z[2], z[2] - z[3], z[3] + 0.5 * z[0]]
        })
        .collect();
    let s = PartialSample::from_rows(&rows, vec![None; 300]).unwrap();
    let pca = pca_project(&s, 2).unwrap();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..4).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(4, 4, |a, b| {
        rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1.0)
    });
    let oracle = eigen_oracle(cov, 2);
    for (c, (lam, v)) in oracle.iter().enumerate() {
        assert!((pca.explained_variance[c] - lam).abs() < 1e-8 * lam);
        let dot: f64 = pca.components[c].iter().zip(v).map(|(a, b)| a * b).sum();
        let sign = dot.signum();
        for (a, b) in pca.components[c].iter().zip(v) {
            assert!((a - sign * b).abs() < 1e-6);
        }
        for (j, row) in rows.iter().enumerate() {
            let z: f64 = row.iter().zip(&mean).zip(v).map(|((x, m), e)| (x - m) * e).sum();
            assert!((pca.projected.row(j)[c] - sign * z).abs() < 1e-6);
        }
    }
}

#[test]
fn pca_of_isotropic_data_has_flat_spectrum() {
    let mut r = seeded(6);
    let rows: Vec<Vec<f64>> = (0..20_000).map(|_| (0..3).map(|_| r.sample(StandardNormal)).collect()).collect();
    let s = PartialSample::from_rows(&rows, vec![None; 20_000]).unwrap();
    let ev = pca_project(&s, 3).unwrap().explained_variance;
    assert!(ev.iter().all(|v| (v - 1.0).abs() < 0.05), "{ev:?}");
}

fn small_cell() -> StudyConfig {
    let mut c = StudyConfig::new(
        "order",
        ModelSpec::TwoClass { delta: 2.0, lambda: 2.0, p: 2, pi1: 0.5 },
        MissingnessParams::entropy(1.0, 1.0),
        120,
        6,
        17,
    );
    c.reference_error = ReferenceError::MonteCarlo { n_ref: 200_000 };
    c.bootstrap_resamples = 200;
    c
}

#[test]
fn replication_order_does_not_matter() {
    let cfg = small_cell();
    let forward: Vec<_> = (0..cfg.replications).map(|i| run_replication(&cfg, i).unwrap()).collect();
    let mut backward: Vec<_> = (0..cfg.replications).rev().map(|i| run_replication(&cfg, i).unwrap()).collect();
    backward.reverse();
    assert_eq!(forward, backward);
    let base = cfg.baseline().unwrap();
    assert_eq!(estimate_re(&forward, base).unwrap(), estimate_re(&backward, base).unwrap());
    let a = run_study(std::slice::from_ref(&cfg)).unwrap();
    let b = run_study(std::slice::from_ref(&cfg)).unwrap();
    assert_eq!(a, b);
    let cell = a[0].result.as_ref().unwrap();
    let direct = estimate_re(&forward, base).unwrap();
    assert_eq!(cell.re_full_vs_cc, direct.re_full_vs_cc);
    assert!((0.0..=1.0).contains(&cell.mean_missing));
}

#[test]
fn report_has_one_row_per_cell_and_isolates_failures() {
    let good = small_cell();
    let mut bad = small_cell();
    bad.name = "bad".into();
    bad.reference_error = ReferenceError::ClosedForm;
    let out = run_study(&[good, bad]).unwrap();
    assert!(out[0].result.is_ok());
    assert!(out[1].result.is_err());
    let mut buf = Vec::new();
    write_report_csv(&out, &mut buf, &[("seed".into(), "17".into())]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# seed=17");
    assert!(lines[1].starts_with("cell,model,form"));
    assert_eq!(lines.len(), 4);
    assert!(lines[3].ends_with("UnsupportedError"), "{}", lines[3]);
}

#[test]
fn bootstrap_se_is_stable_when_resamples_double() {
    let mut r = seeded(3);
    let recs: Vec<_> = (0..200)
        .map(|i| {
            let full = 0.1 + 0.02 * r.random::<f64>();
            support::record(i, 0.1, full + 0.03 * r.random::<f64>(), full + 0.02 * r.random::<f64>(), full)
        })
        .collect();
    let base = Baseline::Fixed(0.1);
    let (a1, b1) = bootstrap_se(&recs, 1000, 1, base);
    let (a2, b2) = bootstrap_se(&recs, 2000, 2, base);
    let close = |x: f64, y: f64| (x - y).abs() <= 0.1 * y;
    assert!(close(a1.unwrap(), a2.unwrap()) && close(b1.unwrap(), b2.unwrap()));
}

#[test]
fn two_record_bootstrap_matches_enumeration() {
    let recs = vec![support::record(0, 0.1, 0.14, 0.12, 0.11), support::record(1, 0.1, 0.13, 0.125, 0.115)];
    let base = Baseline::Fixed(0.1);
    let (cc, ig) = bootstrap_se(&recs, 200_000, 9, base);
    let want_cc = support::exhaustive_bootstrap_sd(&recs, Estimator::Cc, base).unwrap();
    let want_ig = support::exhaustive_bootstrap_sd(&recs, Estimator::Ig, base).unwrap();
    assert!((cc.unwrap() - want_cc).abs() < 0.01 * want_cc, "{cc:?} vs {want_cc}");
    assert!((ig.unwrap() - want_ig).abs() < 0.01 * want_ig, "{ig:?} vs {want_ig}");
}

#[test]
fn study_file_round_trips_through_toml() {
    let f = StudyFile { cells: vec![small_cell()] };
    let text = f.to_toml().unwrap();
    assert_eq!(StudyFile::from_toml(&text).unwrap(), f);
    assert!(StudyFile::from_toml("cells = 3").is_err());
}
