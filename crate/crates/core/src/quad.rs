//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.
//!
//! Intervals are bisected greedily, always splitting the one with the
//! largest error estimate, until the summed estimate falls below
//! `max(abs, rel·|I|)`. Infinite ranges and endpoint singularities are left
//! to the caller, who knows which substitution suits the integrand.

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

// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5, 7.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Requested accuracy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-9,
            abs: 1e-14,
        }
    }
}

impl Tolerance {
    pub fn rel(rel: f64) -> Self {
        Self { rel, abs: 1e-14 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Copy)]
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

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    let value = k * h;
    let mut error = ((k - g) * h).abs();
    if !value.is_finite() || !error.is_finite() {
        error = f64::INFINITY;
    }
    Segment { a, b, value, error }
}

const MAX_SEGMENTS: usize = 4000;

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    integrate_with_breaks(f, &[a, b], tol)
}

/// Integrates `f` over `[p_0, p_last]` with the listed interior points used
/// as initial subdivision (useful where the integrand changes scale).
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    points: &[f64],
    tol: Tolerance,
) -> Result<Estimate> {
    assert!(points.len() >= 2, "need at least the two endpoints");
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut err = 0.0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            let s = kronrod(&mut f, w[0], w[1]);
            total += s.value;
            err += s.error;
            heap.push(s);
        }
    }
    if heap.is_empty() {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let mut count = heap.len();
    loop {
        let target = tol.abs.max(tol.rel * total.abs());
        if err <= target {
            break;
        }
        if count >= MAX_SEGMENTS || !err.is_finite() {
            return Err(Error::Quadrature {
                achieved: err,
                requested: target,
            });
        }
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Cannot split further in floating point; accept what we have.
            if worst.error > target {
                return Err(Error::Quadrature {
                    achieved: err,
                    requested: target,
                });
            }
            heap.push(worst);
            break;
        }
        let left = kronrod(&mut f, worst.a, mid);
        let right = kronrod(&mut f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        count += 1;
        // Keep the running sums honest against accumulated cancellation.
        if count % 256 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            err = heap.iter().map(|s| s.error).sum();
        }
    }
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(Estimate { value, error })
}

/// Geometric breakpoints `lo·r^j` covering `(lo, hi)`, plus both ends.
/// Used for integrands with structure near zero spread over many decades.
pub fn geometric_breaks(start: f64, lo: f64, hi: f64, ratio: f64) -> Vec<f64> {
    let mut pts = vec![start];
    let mut x = lo;
    while x < hi {
        if x > start {
            pts.push(x);
        }
        x *= ratio;
    }
    pts.push(hi);
    pts
}
