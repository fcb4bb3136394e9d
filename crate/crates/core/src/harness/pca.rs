use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PartialSample;

/// Principal-component projection of a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    /// Projected rows with the original labels.
    pub projected: PartialSample,
    /// Column means removed before projecting.
    pub center: Vec<f64>,
    /// Leading eigenvectors, one per output coordinate.
    pub components: Vec<Vec<f64>>,
    /// All covariance eigenvalues in decreasing order.
    pub explained_variance: Vec<f64>,
}

/// Centers the features and projects them onto the top `target_dim`
/// eigenvectors of the sample covariance (divisor `n - 1`).
pub fn pca_project(sample: &PartialSample, target_dim: usize) -> Result<Pca> {
    let (n, p) = (sample.n(), sample.p());
    if target_dim == 0 {
        return Err(Error::InvalidParameter("target dimension must be at least 1".into()));
    }
    if n < 2 {
        return Err(Error::Rank { requested: target_dim, rank: 0 });
    }
    let x = DMatrix::from_row_slice(n, p, sample.features());
    let center: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let mut xc = x;
    for (j, c) in center.iter().enumerate() {
        xc.column_mut(j).add_scalar_mut(-c);
    }
    let cov = xc.transpose() * &xc / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let top = values.first().copied().unwrap_or(0.0);
    let rank = values.iter().filter(|&&v| v > 1e-10 * top.max(f64::MIN_POSITIVE)).count();
    if target_dim > rank {
        return Err(Error::Rank { requested: target_dim, rank });
    }
    let components: Vec<Vec<f64>> =
        order[..target_dim].iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
    let w = DMatrix::from_fn(p, target_dim, |r, c| components[c][r]);
    let proj = xc * w;
    let mut features = Vec::with_capacity(n * target_dim);
    for r in 0..n {
        features.extend(proj.row(r).iter());
    }
    Ok(Pca {
        projected: PartialSample::new(target_dim, features, sample.labels().to_vec())?,
        center,
        components,
        explained_variance: values,
    })
}
