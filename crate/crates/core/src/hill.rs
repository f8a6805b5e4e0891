//! Hill numbers `^qD_ν` of the rate intensity `ν`.
//!
//! With `Λ = ν(0, ∞)` finite,
//! `^qD_ν = (Λ^{-q} ∫ λ^{q-1} ν(dλ))^{1/(1-q)}` and
//! `^1D_ν = Λ exp(-Λ^{-1} ∫ log λ ν(dλ))`. Order 0 is the expected richness.
//! A positive mass of zero-rate species makes every order `q ≤ 1` infinite.

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::ext::ExtendedNonnegReal;
use crate::models::{Ldr1Params, Ldr2Params, Model, PlnParams, Rdr1Params};
use crate::quad::{self, Tolerance};

/// Orders within this distance of 1 use the Shannon form.
pub const Q_ONE_BAND: f64 = 1e-6;

fn check_q(q: f64) -> Result<()> {
    if q.is_finite() && q >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(
            "order q",
            format!("must be a finite nonnegative number, got {q}"),
        ))
    }
}

fn is_one(q: f64) -> bool {
    (q - 1.0).abs() < Q_ONE_BAND
}

/// `^qD_ν` for any model.
pub fn hill(model: &Model, q: f64) -> Result<ExtendedNonnegReal> {
    check_q(q)?;
    match model {
        Model::Ldr1(p) => hill_ldr1(p, q),
        Model::Ldr2(p) => hill_ldr2(p, q),
        Model::Rdr1(p) => hill_rdr1(p, q),
        Model::Pln(p) => hill_pln(p, q),
    }
}

/// `^0D_ν = E(D)`.
pub fn hill_e_d(model: &Model) -> Result<ExtendedNonnegReal> {
    model.expected_richness()
}

/// Closed forms for LDR1.
///
/// For the power law (`b = 0`, so `Λ = ∞`) every order `q ≤ 1` is `∞`; above
/// 1 the `b → 0` limit of the closed form applies, which is 0.
pub fn hill_ldr1(p: &Ldr1Params, q: f64) -> Result<ExtendedNonnegReal> {
    check_q(q)?;
    p.validate()?;
    let (a, b, c) = (p.a, p.b, p.c);
    if c.is_infinite() {
        // every species has rate 0
        return Ok(if q <= 1.0 {
            ExtendedNonnegReal::INFINITY
        } else {
            ExtendedNonnegReal::ZERO
        });
    }
    if c < crate::models::BRANCH_EPS {
        return Ok(ExtendedNonnegReal::saturating(a * b * (1.0 / b).exp()));
    }
    if b == 0.0 {
        return Ok(if q <= 1.0 {
            ExtendedNonnegReal::INFINITY
        } else {
            ExtendedNonnegReal::ZERO
        });
    }
    let inv = 1.0 / c;
    if q <= 1.0 - inv {
        return Ok(ExtendedNonnegReal::INFINITY);
    }
    // log of a((b+c)/b)^{1/c} (b/c), the q-free factor
    let log_base = a.ln() + inv * (c / b).ln_1p() + (b / c).ln();
    let log_tail = if is_one(q) {
        -digamma(inv)
    } else {
        (ln_gamma(inv + q - 1.0) - ln_gamma(inv)) / (1.0 - q)
    };
    Ok(ExtendedNonnegReal::saturating((log_base + log_tail).exp()))
}

/// LDR1 plus zero-rate species: infinite for `q ≤ 1`, otherwise the inner
/// value rescaled by `(Λ/Λ_inner)^{q/(q-1)}`.
pub fn hill_ldr2(p: &Ldr2Params, q: f64) -> Result<ExtendedNonnegReal> {
    check_q(q)?;
    p.validate()?;
    if p.zero_rate == 0.0 {
        return hill_ldr1(&p.inner, q);
    }
    if q <= 1.0 + Q_ONE_BAND {
        return Ok(ExtendedNonnegReal::INFINITY);
    }
    let inner = hill_ldr1(&p.inner, q)?;
    let lam_in = p.inner.lambda();
    if inner.is_infinite() || lam_in.is_infinite() {
        return Ok(inner);
    }
    let ratio = (lam_in.value() + p.zero_rate) / lam_in.value();
    Ok(inner * ratio.powf(q / (q - 1.0)))
}

/// Poisson–lognormal: `γ exp(-q σ²/2)`.
pub fn hill_pln(p: &PlnParams, q: f64) -> Result<ExtendedNonnegReal> {
    check_q(q)?;
    p.validate()?;
    Ok(ExtendedNonnegReal::saturating(
        p.gamma * (-0.5 * q * p.sigma * p.sigma).exp(),
    ))
}

/// RDR1 by one-dimensional quadrature; needs `b1 > 0` (finite `Λ`).
///
/// Writing `ν = A (m1 ∗ m2)` with gamma kernels and `w(y) = b1 + (b2-b1) y`,
/// `∫ λ^s ν(dλ) ∝ Γ(C+s) ∫_0^1 y^{c2-1}(1-y)^{c1-1} w^{-(C+s)} dy` with
/// `C = c1 + c2`, so each Hill number is `Λ` times a ratio of two such
/// integrals.
pub fn hill_rdr1(p: &Rdr1Params, q: f64) -> Result<ExtendedNonnegReal> {
    check_q(q)?;
    p.validate()?;
    if let Some(l) = p.to_ldr1() {
        return hill_ldr1(&l, q);
    }
    if p.b1 == 0.0 {
        return Err(Error::Undefined(
            "Hill numbers of RDR1 with b1 = 0 (infinite total rate) have no closed form".into(),
        ));
    }
    let lambda = p.lambda().value();
    let cs = p.c_sum();
    if is_one(q) {
        let base = BetaIntegral::new(p, cs)?;
        let mean_log_w = base.weighted_log_w / base.mass;
        return Ok(ExtendedNonnegReal::saturating(
            lambda * (mean_log_w - digamma(cs)).exp(),
        ));
    }
    let k = cs + q - 1.0;
    if k <= 0.0 {
        return Ok(ExtendedNonnegReal::INFINITY);
    }
    let num = BetaIntegral::new(p, k)?;
    let den = BetaIntegral::new(p, cs)?;
    let log_i = ln_gamma(k) - ln_gamma(cs) + num.log_mass() - den.log_mass();
    Ok(ExtendedNonnegReal::saturating(
        lambda * (log_i / (1.0 - q)).exp(),
    ))
}

/// `∫_0^1 y^{c2-1}(1-y)^{c1-1} w(y)^{-k} dy`, stored as `exp(shift)·mass`,
/// together with the same integral weighted by `log w`.
struct BetaIntegral {
    shift: f64,
    mass: f64,
    weighted_log_w: f64,
}

impl BetaIntegral {
    fn log_mass(&self) -> f64 {
        self.shift + self.mass.ln()
    }

    fn new(p: &Rdr1Params, k: f64) -> Result<Self> {
        let (b1, b2, c1, c2) = (p.b1, p.b2, p.c1, p.c2);
        let gap = b2 - b1;
        let log_w = |y: f64| (b1 + gap * y).ln();
        // Each half is mapped so that an integrable endpoint singularity
        // disappears: y = u^{1/c2} near 0 when c2 < 1, 1 - y = v^{1/c1} near 1
        // when c1 < 1. `h` returns (log integrand, log w) in the new variable.
        let lower = Half::new(c2, move |u: f64| {
            let (y, log_jac) = if c2 < 1.0 {
                (u.powf(1.0 / c2), -c2.ln())
            } else {
                (u, pow_log(c2 - 1.0, u))
            };
            let lw = log_w(y);
            (log_jac + (c1 - 1.0) * (-y).ln_1p() - k * lw, lw)
        });
        let upper = Half::new(c1, move |v: f64| {
            let (y, log_jac) = if c1 < 1.0 {
                let s = v.powf(1.0 / c1);
                (1.0 - s, -c1.ln())
            } else {
                (1.0 - v, pow_log(c1 - 1.0, v))
            };
            let lw = log_w(y);
            (log_jac + pow_log(c2 - 1.0, y) - k * lw, lw)
        });
        let shift = lower.peak().max(upper.peak());
        if !shift.is_finite() {
            return Err(Error::Numeric(
                "RDR1 Hill integrand has no finite peak".into(),
            ));
        }
        let (m1, l1) = lower.integrate(shift)?;
        let (m2, l2) = upper.integrate(shift)?;
        Ok(Self {
            shift,
            mass: m1 + m2,
            weighted_log_w: l1 + l2,
        })
    }
}

/// `e·ln x` with `0·ln 0 = 0`.
fn pow_log(e: f64, x: f64) -> f64 {
    if e == 0.0 {
        0.0
    } else {
        e * x.ln()
    }
}

/// Half of the unit interval in a transformed variable on `[0, top]`.
struct Half<F> {
    h: F,
    top: f64,
    grid: Vec<f64>,
}

impl<F: Fn(f64) -> (f64, f64)> Half<F> {
    fn new(c: f64, h: F) -> Self {
        let top = if c < 1.0 { 0.5f64.powf(c) } else { 0.5 };
        // geometric near 0 plus uniform, to locate sharp peaks
        let mut grid: Vec<f64> = (1..=60).map(|i| top * 2f64.powi(-i / 2)).collect();
        grid.extend((1..=200).map(|i| top * i as f64 / 200.0));
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        Self { h, top, grid }
    }

    fn peak(&self) -> f64 {
        self.grid
            .iter()
            .map(|&u| (self.h)(u).0)
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn integrate(&self, shift: f64) -> Result<(f64, f64)> {
        let best = self
            .grid
            .iter()
            .copied()
            .max_by(|&a, &b| (self.h)(a).0.total_cmp(&(self.h)(b).0))
            .unwrap_or(self.top);
        let mut pts = quad::geometric_breaks(0.0, self.top * 1e-12, self.top, 10.0);
        pts.push(best);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let tol = Tolerance {
            rel: 1e-10,
            abs: 0.0,
        };
        let f = |u: f64| {
            let (l, _) = (self.h)(u);
            if l.is_finite() {
                (l - shift).exp()
            } else {
                0.0
            }
        };
        let mass = quad::integrate_with_breaks(f, &pts, tol)?.value;
        let g = |u: f64| {
            let (l, lw) = (self.h)(u);
            if l.is_finite() {
                (l - shift).exp() * lw
            } else {
                0.0
            }
        };
        let tol_w = Tolerance {
            rel: 1e-10,
            abs: 1e-12 * mass,
        };
        let weighted = quad::integrate_with_breaks(g, &pts, tol_w)?.value;
        Ok((mass, weighted))
    }
}
