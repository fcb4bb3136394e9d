//! Asymptotic relative efficiencies in the canonical two-class homoscedastic
//! model with equal priors and the discriminant-form mechanism.
//!
//! All quantities are one-dimensional integrals over the first canonical
//! coordinate, evaluated on `[-(delta/2 + 10), delta/2 + 10]`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{logistic, std_normal_pdf};
use crate::missingness::{MissingnessForm, MissingnessParams};
use crate::quadrature::{centered_breaks, integrate_panels, QuadOptions, QuadResult};

pub const DEFAULT_TOL: f64 = 1e-9;

/// Inputs for one point of an efficiency curve. Priors are equal by
/// construction, so the log odds vanish.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreInputs {
    pub delta: f64,
    pub xi: MissingnessParams,
}

impl AreInputs {
    pub const PI1: f64 = 0.5;

    pub fn new(delta: f64, xi0: f64, xi1: f64) -> Result<Self> {
        let xi = MissingnessParams::discriminant(xi0, xi1);
        check(delta, &xi)?;
        Ok(Self { delta, xi })
    }
}

fn check(delta: f64, xi: &MissingnessParams) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if xi.form != MissingnessForm::Discriminant {
        return Err(Error::InvalidParameter("efficiency results use the discriminant mechanism".into()));
    }
    Ok(())
}

/// Integral over `|y1| <= delta/2 + 10`. The mechanism confines the
/// integrands to a band of width about `1 / (delta sqrt|xi1|)` around the
/// boundary, so the starting panels are refined there.
fn over_y1<F: Fn(f64) -> f64>(delta: f64, xi1: f64, tol: f64, f: F) -> Result<QuadResult> {
    let b = delta / 2.0 + 10.0;
    let finest = 0.05 / (1.0 + delta * (1.0 + xi1.abs().sqrt()));
    integrate_panels(f, &centered_breaks(-b, b, 0.0, finest, 0.5), QuadOptions { abs_tol: tol, max_intervals: 4000 })
}

/// Density of the first canonical coordinate.
#[inline]
fn f_y1(delta: f64, y: f64) -> f64 {
    0.5 * std_normal_pdf(y - delta / 2.0) + 0.5 * std_normal_pdf(y + delta / 2.0)
}

#[inline]
fn q1(delta: f64, xi: &MissingnessParams, y: f64) -> f64 {
    logistic(xi.xi0 + xi.xi1 * delta * delta * y * y)
}

pub fn quad_c0_with(delta: f64, tol: f64) -> Result<QuadResult> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let s = (-delta * delta / 8.0).exp();
    over_y1(delta, 0.0, tol, |y| std_normal_pdf(y) * s / (delta * y / 2.0).cosh())
}

pub fn quad_b0_with(delta: f64, xi: &MissingnessParams, tol: f64) -> Result<QuadResult> {
    check(delta, xi)?;
    let c = 4.0 * xi.xi1 * xi.xi1 * delta * delta;
    over_y1(delta, xi.xi1, tol, |y| {
        let q = q1(delta, xi, y);
        c * y * y * q * (1.0 - q) * f_y1(delta, y)
    })
}

/// The product of the missing proportion and `d0`, as one integral.
pub fn quad_gamma_d0_with(delta: f64, xi: &MissingnessParams, tol: f64) -> Result<QuadResult> {
    check(delta, xi)?;
    over_y1(delta, xi.xi1, tol, |y| {
        let t1 = logistic(delta * y);
        t1 * (1.0 - t1) * q1(delta, xi, y) * f_y1(delta, y)
    })
}

/// Expected missing proportion.
pub fn quad_gamma_with(delta: f64, xi: &MissingnessParams, tol: f64) -> Result<QuadResult> {
    check(delta, xi)?;
    over_y1(delta, xi.xi1, tol, |y| q1(delta, xi, y) * f_y1(delta, y))
}

pub fn quad_c0(delta: f64) -> Result<f64> {
    quad_c0_with(delta, DEFAULT_TOL).map(|r| r.value)
}

pub fn quad_b0(delta: f64, xi: &MissingnessParams) -> Result<f64> {
    quad_b0_with(delta, xi, DEFAULT_TOL).map(|r| r.value)
}

pub fn quad_gamma_d0(delta: f64, xi: &MissingnessParams) -> Result<f64> {
    quad_gamma_d0_with(delta, xi, DEFAULT_TOL).map(|r| r.value)
}

pub fn quad_gamma(delta: f64, xi: &MissingnessParams) -> Result<f64> {
    quad_gamma_with(delta, xi, DEFAULT_TOL).map(|r| r.value)
}

/// Every scalar behind the two efficiency ratios at one `(delta, xi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scalars {
    pub c0: f64,
    pub b0: f64,
    pub gamma_d0: f64,
    pub gamma: f64,
    pub u0: f64,
    pub a0: f64,
    /// Largest error estimate among the integrals.
    pub err_estimate: f64,
}

pub fn scalars(delta: f64, xi: &MissingnessParams, tol: f64) -> Result<Scalars> {
    let c0 = quad_c0_with(delta, tol)?;
    let b0 = quad_b0_with(delta, xi, tol)?;
    let gd0 = quad_gamma_d0_with(delta, xi, tol)?;
    let gamma = quad_gamma_with(delta, xi, tol)?;
    let base = 1.0 / (4.0 + delta * delta);
    Ok(Scalars {
        c0: c0.value,
        b0: b0.value,
        gamma_d0: gd0.value,
        gamma: gamma.value,
        u0: base - gd0.value + b0.value,
        a0: base - c0.value,
        err_estimate: c0.error.max(b0.error).max(gd0.error).max(gamma.error),
    })
}

/// `u0 = 1/(4 + delta^2) - gamma d0 + b0` and `a0 = 1/(4 + delta^2) - c0`.
/// Fails with a domain error when `a0 <= 0`.
pub fn u0_a0(delta: f64, xi: &MissingnessParams) -> Result<(f64, f64)> {
    let s = scalars(delta, xi, DEFAULT_TOL)?;
    if !(s.a0 > 0.0) {
        return Err(Error::Domain(format!("a0 = {:.6e} is not positive at delta = {delta}", s.a0)));
    }
    Ok((s.u0, s.a0))
}

/// Efficiency of the full-likelihood rule relative to the one ignoring the
/// mechanism, `u0 / a0`.
pub fn are_full_vs_ig(delta: f64, xi: &MissingnessParams) -> Result<f64> {
    let (u0, a0) = u0_a0(delta, xi)?;
    Ok(u0 / a0)
}

/// Efficiency of the full-likelihood rule relative to the complete-data rule,
/// `u0 (4 + delta^2)`.
pub fn are_full_vs_cc(delta: f64, xi: &MissingnessParams) -> Result<f64> {
    let s = scalars(delta, xi, DEFAULT_TOL)?;
    Ok(s.u0 * (4.0 + delta * delta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreCurvePoint {
    pub delta: f64,
    pub gamma: Option<f64>,
    pub are_full_vs_ig: Option<f64>,
    pub are_full_vs_cc: Option<f64>,
    pub u0: Option<f64>,
    pub a0: Option<f64>,
    pub err_estimate: Option<f64>,
    /// `a0_nonpositive`, `unreliable` or `failed:<kind>`.
    pub flags: Vec<String>,
}

impl AreCurvePoint {
    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

fn curve_point(delta: f64, xi: &MissingnessParams, tol: f64) -> AreCurvePoint {
    let mut pt = AreCurvePoint {
        delta,
        gamma: None,
        are_full_vs_ig: None,
        are_full_vs_cc: None,
        u0: None,
        a0: None,
        err_estimate: None,
        flags: Vec::new(),
    };
    match scalars(delta, xi, tol) {
        Ok(s) => {
            pt.gamma = Some(s.gamma);
            pt.u0 = Some(s.u0);
            pt.a0 = Some(s.a0);
            pt.err_estimate = Some(s.err_estimate);
            pt.are_full_vs_cc = Some(s.u0 * (4.0 + delta * delta));
            if s.a0 > 0.0 {
                pt.are_full_vs_ig = Some(s.u0 / s.a0);
            } else {
                pt.flags.push("a0_nonpositive".into());
            }
            if !(s.err_estimate <= tol) {
                pt.flags.push("unreliable".into());
            }
        }
        Err(e) => pt.flags.push(format!("failed:{}", e.kind())),
    }
    pt
}

/// Both efficiency ratios and the missing proportion along a strictly
/// increasing grid of separations. Failures are recorded per point.
pub fn are_curve(grid: &[f64], xi: &MissingnessParams, tol: f64) -> Result<Vec<AreCurvePoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty delta grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("delta grid must be strictly increasing".into()));
    }
    check(grid[0], xi)?;
    Ok(grid.par_iter().map(|&d| curve_point(d, xi, tol)).collect())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Writes `delta,gamma,are_full_vs_cc,are_full_vs_ig,u0,a0,err_estimate,flags`
/// after `# key=value` metadata lines. Flags are joined with `;`.
pub fn write_curve_csv<W: Write>(points: &[AreCurvePoint], mut w: W, metadata: &[(String, String)]) -> Result<()> {
    for (k, v) in metadata {
        writeln!(w, "# {k}={v}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["delta", "gamma", "are_full_vs_cc", "are_full_vs_ig", "u0", "a0", "err_estimate", "flags"])?;
    for p in points {
        out.write_record([
            format!("{:?}", p.delta),
            cell(p.gamma),
            cell(p.are_full_vs_cc),
            cell(p.are_full_vs_ig),
            cell(p.u0),
            cell(p.a0),
            cell(p.err_estimate),
            p.flags.join(";"),
        ])?;
    }
    out.flush()?;
    Ok(())
}
