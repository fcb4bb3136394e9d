use rand::seq::SliceRandom;

use super::study::{fit_estimator, FitSettings};
use crate::classifier::misclassification_fraction;
use crate::error::{Error, Result};
use crate::estimation::Estimator;
use crate::missingness::MissingnessForm;
use crate::model::PartialSample;
use crate::rng::{stream, tag};

const MAX_REFOLDS: usize = 10;

/// k-fold cross-validated error rate.
///
/// `visible` holds the labels available for fitting and `complete` the same
/// rows with ground-truth labels, used for the complete-data estimator and for
/// scoring held-out folds. Rows are shuffled and dealt into `k` folds of equal
/// size (up to one row); the fold errors are averaged with equal weight.
/// Splits leaving a class without labeled training rows are redrawn.
#[allow(clippy::too_many_arguments)]
pub fn kfold_cv(
    visible: &PartialSample,
    complete: &PartialSample,
    g: usize,
    k: usize,
    estimator: Estimator,
    form: MissingnessForm,
    settings: &FitSettings,
    seed: u64,
) -> Result<f64> {
    let n = visible.n();
    if complete.n() != n || !complete.is_fully_labeled() {
        return Err(Error::Contract("complete sample must match the visible rows and carry every label".into()));
    }
    if k < 2 || k > n {
        return Err(Error::InvalidParameter(format!("need 2 <= k <= n, got k = {k}, n = {n}")));
    }
    let fitting = if estimator == Estimator::Cc { complete } else { visible };
    let mut rng = stream(&[seed, tag("kfold"), k as u64]);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..MAX_REFOLDS {
        order.shuffle(&mut rng);
        let folds: Vec<Vec<usize>> = (0..k).map(|f| order.iter().skip(f).step_by(k).copied().collect()).collect();
        let train_sets: Vec<Vec<usize>> =
            (0..k).map(|f| (0..k).filter(|&o| o != f).flat_map(|o| folds[o].iter().copied()).collect()).collect();
        let covers = |idx: &[usize]| {
            let mut seen = vec![false; g];
            for &j in idx {
                if let Some(l) = fitting.label(j) {
                    seen[l - 1] = true;
                }
            }
            seen.iter().all(|&s| s)
        };
        if !train_sets.iter().all(|t| covers(t)) {
            continue;
        }
        let mut total = 0.0;
        for (f, test) in folds.iter().enumerate() {
            let mut train = train_sets[f].clone();
            train.sort_unstable();
            let fit = fit_estimator(
                estimator,
                &visible.subset(&train),
                &complete.subset(&train),
                g,
                form,
                &FitSettings { seed: settings.seed ^ f as u64, ..*settings },
            )?;
            total += misclassification_fraction(&fit.theta_hat, &complete.subset(test))?;
        }
        return Ok(total / k as f64);
    }
    Err(Error::Fold(format!("no split into {k} folds kept every class in training after {MAX_REFOLDS} attempts")))
}
