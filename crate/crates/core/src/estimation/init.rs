use nalgebra::{DMatrix, DVector};

use super::likelihood::loglik_ig;
use super::moments::{one_hot, weighted_moments};
use crate::error::{Error, Result};
use crate::missingness::{fit_mechanism, MissingnessForm, MissingnessParams};
use crate::model::{MixtureParams, PartialSample};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations seeded by farthest-point traversal away from `anchors`.
/// Returns the cluster index of every row of `rows`.
fn kmeans(rows: &[&[f64]], k: usize, anchors: &[Vec<f64>]) -> Vec<usize> {
    let p = rows[0].len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut fixed: Vec<Vec<f64>> = anchors.to_vec();
    if fixed.is_empty() {
        let mut mean = vec![0.0; p];
        for r in rows {
            for i in 0..p {
                mean[i] += r[i] / rows.len() as f64;
            }
        }
        fixed.push(mean);
    }
    for _ in 0..k {
        let far = rows
            .iter()
            .map(|r| fixed.iter().chain(&centers).map(|c| sq_dist(r, c)).fold(f64::INFINITY, f64::min))
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, d)| if d > best.1 { (j, d) } else { best });
        centers.push(rows[far.0].to_vec());
    }
    let mut assign = vec![0; rows.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (j, r) in rows.iter().enumerate() {
            let c = (0..k).min_by(|&a, &b| sq_dist(r, &centers[a]).total_cmp(&sq_dist(r, &centers[b]))).unwrap_or(0);
            if c != assign[j] {
                assign[j] = c;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&&[f64]> = rows.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(r, _)| r).collect();
            if !members.is_empty() {
                for i in 0..p {
                    center[i] = members.iter().map(|r| r[i]).sum::<f64>() / members.len() as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    assign
}

fn sample_covariance(sample: &PartialSample) -> DMatrix<f64> {
    let (n, p) = (sample.n() as f64, sample.p());
    let mut mean = DVector::<f64>::zeros(p);
    for y in sample.rows() {
        mean += DVector::from_column_slice(y) / n;
    }
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for y in sample.rows() {
        let d = DVector::from_column_slice(y) - &mean;
        cov += &d * d.transpose() / n;
    }
    cov
}

/// Starting values for the iterative fits.
///
/// Theta comes from labeled-only moments. A class with no labeled member is
/// seeded by k-means on the unlabeled rows, and a class with too few members
/// for a nonsingular covariance borrows the overall sample covariance. Xi is
/// the logistic regression of the missing flags on the mechanism covariate
/// under the starting theta.
pub fn init_strategy(
    sample: &PartialSample,
    g: usize,
    form: MissingnessForm,
    homoscedastic: bool,
) -> Result<(MixtureParams, MissingnessParams)> {
    sample.validate_for(g)?;
    let p = sample.p();
    let counts = sample.class_counts(g);
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::Unsupported("no labeled rows: class correspondence is undefined".into()));
    }
    let mut resp = one_hot(sample, g);
    let unobserved: Vec<usize> = (0..g).filter(|&k| counts[k] == 0).collect();
    let mut counts = counts;
    if !unobserved.is_empty() {
        let idx: Vec<usize> = (0..sample.n()).filter(|&j| sample.is_missing(j)).collect();
        if idx.len() < unobserved.len() {
            return Err(Error::Unsupported("too few unlabeled rows to seed unobserved classes".into()));
        }
        let anchors: Vec<Vec<f64>> = (0..g)
            .filter(|&k| counts[k] > 0)
            .map(|k| {
                let members: Vec<&[f64]> =
                    (0..sample.n()).filter(|&j| sample.label(j) == Some(k + 1)).map(|j| sample.row(j)).collect();
                (0..p).map(|i| members.iter().map(|r| r[i]).sum::<f64>() / members.len() as f64).collect()
            })
            .collect();
        let rows: Vec<&[f64]> = idx.iter().map(|&j| sample.row(j)).collect();
        let assign = kmeans(&rows, unobserved.len(), &anchors);
        for (&j, &c) in idx.iter().zip(&assign) {
            let k = unobserved[c];
            resp[j * g + k] = 1.0;
            counts[k] += 1;
        }
    }
    let deficient: Vec<usize> = (0..g).filter(|&k| counts[k] < p + 1).collect();
    let theta = if deficient.is_empty() {
        weighted_moments(sample, &resp, g, homoscedastic)?
    } else {
        let total: f64 = counts.iter().sum::<usize>() as f64;
        let weights: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64 / total).collect();
        let s: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / s).collect();
        let mut means = vec![vec![0.0; p]; g];
        for (j, y) in sample.rows().enumerate() {
            for k in 0..g {
                if resp[j * g + k] > 0.0 {
                    for i in 0..p {
                        means[k][i] += y[i] / counts[k] as f64;
                    }
                }
            }
        }
        let fallback = sample_covariance(sample);
        let covs = vec![fallback; g];
        MixtureParams::new(weights, means, covs).map_err(|_| Error::Singularity { class: deficient[0] + 1 })?
    };
    let xi = fit_mechanism(&theta, sample, form)?;
    Ok((theta, xi))
}

fn permutations(g: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                rec(prefix, used, out);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(g), &mut vec![false; g], &mut out);
    out
}

/// Component permutation maximizing the labeled-row likelihood; the first
/// maximizer in lexicographic order (identity first) wins ties.
pub fn best_permutation(theta_hat: &MixtureParams, reference: &PartialSample) -> Result<Vec<usize>> {
    let g = theta_hat.g();
    if g > 6 {
        return Err(Error::Unsupported(format!("alignment enumerates g! permutations, g = {g} is too many")));
    }
    let labeled: Vec<usize> = (0..reference.n()).filter(|&j| !reference.is_missing(j)).collect();
    let sub = reference.subset(&labeled);
    let mut best = (f64::NEG_INFINITY, (0..g).collect::<Vec<_>>());
    for perm in permutations(g) {
        let ll = loglik_ig(&theta_hat.permuted(&perm), &sub)?;
        if ll > best.0 {
            best = (ll, perm);
        }
    }
    Ok(best.1)
}

/// Relabels fitted components to agree with the labeled rows of `reference`.
pub fn align_components(theta_hat: &MixtureParams, reference: &PartialSample) -> Result<MixtureParams> {
    Ok(theta_hat.permuted(&best_permutation(theta_hat, reference)?))
}
