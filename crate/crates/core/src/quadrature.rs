//! Globally adaptive Gauss-Kronrod (7/15) integration on a finite interval.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for nodes XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    /// Sum of per-interval |Kronrod - Gauss| estimates.
    pub error: f64,
    pub intervals: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-9, max_intervals: 2000 }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    Segment { a, b, value: k * h, error: ((k - g) * h).abs() }
}

/// Integrates `f` over `[a, b]` until the summed error estimate drops below
/// `opts.abs_tol`, bisecting the worst interval each round.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate_panels(f, &[a, b], opts)
}

/// Like [`integrate`], starting from the panels between consecutive
/// `breaks`. Narrow features that a single 15-point rule would step over
/// are caught by placing breaks around them.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, breaks: &[f64], opts: QuadOptions) -> Result<QuadResult> {
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("quadrature breaks must be strictly increasing".into()));
    }
    let mut heap = BinaryHeap::new();
    let (mut value, mut error) = (0.0, 0.0);
    for w in breaks.windows(2) {
        let seg = kronrod15(&f, w[0], w[1]);
        value += seg.value;
        error += seg.error;
        heap.push(seg);
    }
    while error > opts.abs_tol {
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature { error, intervals: heap.len() });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let left = kronrod15(&f, worst.a, mid);
        let right = kronrod15(&f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    if !value.is_finite() {
        return Err(Error::Quadrature { error: f64::INFINITY, intervals: heap.len() });
    }
    // Re-sum to shed the drift from incremental updates.
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult { value, error, intervals: heap.len() })
}

/// Breaks on `[lo, hi]` that are dense around `center`: the spacing starts
/// at `finest`, doubles until it reaches `coarsest` and stays there.
pub fn centered_breaks(lo: f64, hi: f64, center: f64, finest: f64, coarsest: f64) -> Vec<f64> {
    let c = center.clamp(lo, hi);
    let side = |room: f64| {
        let mut v = Vec::new();
        let (mut x, mut step) = (0.0, finest);
        while x + step < room {
            x += step;
            v.push(x);
            step = (2.0 * step).min(coarsest);
        }
        v
    };
    let mut out = vec![lo];
    out.extend(side(c - lo).iter().rev().map(|d| c - d));
    if c > lo && c < hi {
        out.push(c);
    }
    out.extend(side(hi - c).iter().map(|d| c + d));
    out.push(hi);
    out
}
