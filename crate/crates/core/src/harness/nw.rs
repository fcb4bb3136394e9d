use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classifier::log_entropy_from_weighted;
use crate::error::{Error, Result};
use crate::model::{MixtureParams, PartialSample};

const GRID: usize = 100;

/// Kernel estimate of the missing-label probability against the negative log
/// entropy of the fitted posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NwCurve {
    pub neg_log_entropy: Vec<f64>,
    pub missing_prob: Vec<f64>,
    pub bandwidth: f64,
}

impl NwCurve {
    pub fn write_csv<W: Write>(&self, mut w: W, metadata: &[(String, String)]) -> Result<()> {
        for (k, v) in metadata {
            writeln!(w, "# {k}={v}")?;
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["neg_log_entropy", "missing_prob"])?;
        for (x, m) in self.neg_log_entropy.iter().zip(&self.missing_prob) {
            out.write_record([format!("{x:?}"), format!("{m:?}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Nadaraya-Watson regression of the missing flags on `-log en(y; theta)`
/// with a Gaussian kernel, on 100 evenly spaced points spanning the observed
/// covariate range. Rows whose entropy underflows to zero are dropped.
pub fn nadaraya_watson_missing(sample: &PartialSample, theta: &MixtureParams, bandwidth: f64) -> Result<NwCurve> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if sample.p() != theta.p() {
        return Err(Error::Dimension { expected: theta.p(), got: sample.p() });
    }
    let mut xs = Vec::with_capacity(sample.n());
    let mut ms = Vec::with_capacity(sample.n());
    for (j, y) in sample.rows().enumerate() {
        let x = -log_entropy_from_weighted(&theta.weighted_log_densities(y)?);
        if x.is_finite() {
            xs.push(x);
            ms.push(if sample.is_missing(j) { 1.0 } else { 0.0 });
        }
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Curve("covariate range is degenerate".into()));
    }
    let grid: Vec<f64> = (0..GRID).map(|i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64).collect();
    let mut logw = vec![0.0; xs.len()];
    let probs = grid
        .iter()
        .map(|&x0| {
            // normalize in log space so far-out grid points do not underflow
            for (lw, &x) in logw.iter_mut().zip(&xs) {
                let z = (x0 - x) / bandwidth;
                *lw = -0.5 * z * z;
            }
            let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for (lw, mj) in logw.iter().zip(&ms) {
                let w = (lw - m).exp();
                num += w * mj;
                den += w;
            }
            num / den
        })
        .collect();
    Ok(NwCurve { neg_log_entropy: grid, missing_prob: probs, bandwidth })
}
