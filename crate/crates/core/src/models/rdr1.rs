use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::ExtendedNonnegReal;
use crate::quad::{self, Tolerance};

use super::{ln_factorial, Intensity, Ldr1Params, RateMeasure};

/// Rational derivative ratio model with
/// `ψ'(t) = a ((t0+b1)/(t+b1))^{c1} ((t0+b2)/(t+b2))^{c2}`,
/// so that `ξ(t) = (t+b1)(t+b2) / (c1(t+b2) + c2(t+b1))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rdr1Params {
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub t0: f64,
}

impl Rdr1Params {
    pub fn new(a: f64, b1: f64, b2: f64, c1: f64, c2: f64, t0: f64) -> Result<Self> {
        let p = Self {
            a,
            b1,
            b2,
            c1,
            c2,
            t0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        if !(ok(self.a) && self.a > 0.0) {
            return Err(Error::domain(
                "RDR1 scale a",
                format!("must be positive, got {}", self.a),
            ));
        }
        if !(ok(self.t0) && self.t0 > 0.0) {
            return Err(Error::domain(
                "RDR1 anchor t0",
                format!("must be positive, got {}", self.t0),
            ));
        }
        if !(ok(self.b1) && ok(self.b2) && self.b1 >= 0.0 && self.b2 > self.b1) {
            return Err(Error::domain(
                "RDR1 offsets",
                format!("need 0 <= b1 < b2, got b1 = {}, b2 = {}", self.b1, self.b2),
            ));
        }
        if !(ok(self.c1) && self.c1 > 0.0 && ok(self.c2) && self.c2 >= 0.0) {
            return Err(Error::domain(
                "RDR1 exponents",
                format!(
                    "need c1 > 0 and c2 >= 0, got c1 = {}, c2 = {}",
                    self.c1, self.c2
                ),
            ));
        }
        if self.b1 == 0.0 && self.c1 >= 1.0 {
            return Err(Error::domain(
                "RDR1 exponent c1",
                format!("must be below 1 when b1 = 0, got {}", self.c1),
            ));
        }
        Ok(())
    }

    pub fn with_scale(&self, a: f64) -> Self {
        Self { a, ..*self }
    }

    pub fn c_sum(&self) -> f64 {
        self.c1 + self.c2
    }

    /// `log ψ'(x) - log a`, taking `ln x` to stay finite for huge `x`.
    fn log_dpsi_unit_from_ln(&self, lnx: f64) -> f64 {
        let l1 = if self.b1 == 0.0 {
            lnx
        } else {
            log_add(lnx, self.b1.ln())
        };
        let l2 = log_add(lnx, self.b2.ln());
        self.c1 * ((self.t0 + self.b1).ln() - l1) + self.c2 * ((self.t0 + self.b2).ln() - l2)
    }

    fn log_dpsi_unit(&self, x: f64) -> f64 {
        // ln1p keeps the large-exponent terms accurate when b2 and c2 are huge
        let d = self.t0 - x;
        self.c1 * (d / (x + self.b1)).ln_1p() + self.c2 * (d / (x + self.b2)).ln_1p()
    }

    pub fn dpsi(&self, t: f64) -> f64 {
        self.a * self.log_dpsi_unit(t).exp()
    }

    /// `∫_0^t ψ'(x) dx / a`.
    fn unit_integral(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let tol = Tolerance {
            rel: 1e-11,
            abs: 0.0,
        };
        if self.b1 == 0.0 {
            // x = u^{1/(1-c1)} absorbs the x^{-c1} singularity.
            let c1 = self.c1;
            let p = 1.0 - c1;
            let top = t.powf(p);
            let lead = c1 * (self.t0 + self.b1).ln() - p.ln();
            let f = |u: f64| {
                if u <= 0.0 {
                    return 0.0;
                }
                let x = u.powf(1.0 / p);
                (lead + self.c2 * ((self.t0 - x) / (x + self.b2)).ln_1p()).exp()
            };
            let pts = quad::geometric_breaks(0.0, top * 1e-6, top, 8.0);
            return Ok(quad::integrate_with_breaks(f, &pts, tol)?.value);
        }
        let pts = quad::geometric_breaks(0.0, self.b1.min(self.b2 * 0.5), t, 4.0);
        Ok(quad::integrate_with_breaks(|x| self.log_dpsi_unit(x).exp(), &pts, tol)?.value)
    }

    pub fn log_psi(&self, t: f64) -> Result<f64> {
        Ok(self.a.ln() + self.unit_integral(t)?.ln())
    }

    pub fn psi(&self, t: f64) -> Result<f64> {
        Ok(self.a * self.unit_integral(t)?)
    }

    /// `ξ(t) = -ψ'/ψ''`, the rational derivative ratio.
    pub fn xi(&self, t: f64) -> f64 {
        1.0 / self.rate_ratio(t)
    }

    /// `-ψ''(t)/ψ'(t) = c1/(t+b1) + c2/(t+b2)`.
    fn rate_ratio(&self, t: f64) -> f64 {
        self.c1 / (t + self.b1) + self.c2 / (t + self.b2)
    }

    /// `log E(N_k(t))` for `k = 1..=kmax` by the three-term recurrence on
    /// the expected counts, rescaled as it goes to avoid underflow.
    pub fn log_expected_nk_upto(&self, kmax: u64, t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(kmax as usize);
        if kmax == 0 {
            return out;
        }
        let (b1, b2, c1, c2) = (self.b1, self.b2, self.c1, self.c2);
        let log_e1 = t.ln() + self.a.ln() + self.log_dpsi_unit(t);
        out.push(log_e1);
        if kmax == 1 {
            return out;
        }
        let p = (t + b1) * (t + b2);
        let dp = 2.0 * t + b1 + b2;
        let q = c1 * (t + b2) + c2 * (t + b1);
        let cs = c1 + c2;
        let mut scale = log_e1;
        let mut prev = 0.0; // e_0, its coefficient vanishes
        let mut cur = 1.0; // e_1 / exp(scale)
        for m in 0..kmax - 1 {
            let mf = m as f64;
            let next = ((q + mf * dp) * t * cur / (mf + 2.0)
                - mf * (mf - 1.0 + cs) * t * t * prev / ((mf + 1.0) * (mf + 2.0)))
                / p;
            prev = cur;
            cur = next;
            out.push(if cur > 0.0 {
                scale + cur.ln()
            } else {
                f64::NEG_INFINITY
            });
            let mag = cur.abs();
            if mag > 0.0 && !(1e-100..=1e100).contains(&mag) {
                scale += mag.ln();
                prev /= mag;
                cur /= mag;
            }
        }
        out
    }

    pub fn log_expected_nk(&self, k: u64, t: f64) -> f64 {
        *self.log_expected_nk_upto(k, t).last().expect("k >= 1")
    }

    pub fn log_abs_psi_deriv(&self, k: u64, t: f64) -> f64 {
        self.log_expected_nk(k, t) - k as f64 * t.ln() + ln_factorial(k)
    }

    pub fn psi_deriv(&self, k: u64, t: f64) -> f64 {
        let m = self.log_abs_psi_deriv(k, t).exp();
        if k % 2 == 1 {
            m
        } else {
            -m
        }
    }

    /// Coefficient `A` with `ψ'(t) = A (t+b1)^{-c1} (t+b2)^{-c2}`.
    pub fn log_coefficient(&self) -> f64 {
        self.a.ln() + self.c1 * (self.t0 + self.b1).ln() + self.c2 * (self.t0 + self.b2).ln()
    }

    pub fn lambda(&self) -> ExtendedNonnegReal {
        if self.b1 == 0.0 {
            return ExtendedNonnegReal::INFINITY;
        }
        ExtendedNonnegReal::saturating(self.dpsi(0.0))
    }

    /// `E(D) = ∫_0^∞ ψ'`, finite iff `c1 + c2 > 1`.
    pub fn expected_richness(&self) -> Result<ExtendedNonnegReal> {
        let cs = self.c_sum();
        if cs <= 1.0 {
            return Ok(ExtendedNonnegReal::INFINITY);
        }
        let x = 64.0 * self.t0.max(self.b2);
        let head = self.unit_integral(x)?;
        // x·v^{-1/(C-1)} maps (0, 1] onto [X, ∞) with a bounded integrand.
        let k = 1.0 / (cs - 1.0);
        let lnx = x.ln();
        let tail = quad::integrate(
            |v: f64| {
                if v <= 0.0 {
                    return 0.0;
                }
                let lnxv = lnx - k * v.ln();
                (self.log_dpsi_unit_from_ln(lnxv) + lnx + k.ln() - cs * k * v.ln()).exp()
            },
            0.0,
            1.0,
            Tolerance {
                rel: 1e-11,
                abs: 0.0,
            },
        )?
        .value;
        Ok(ExtendedNonnegReal::saturating(self.a * (head + tail)))
    }

    /// The equivalent LDR1 model when `c2 = 0`.
    pub fn to_ldr1(&self) -> Option<Ldr1Params> {
        (self.c2 == 0.0).then(|| Ldr1Params {
            a: self.a * ((self.t0 + self.b1) / (1.0 + self.b1)).powf(self.c1),
            b: self.b1 / self.c1,
            c: 1.0 / self.c1,
        })
    }

    /// `ν = A·(m1 ∗ m2)` with `m_i(dλ) = λ^{c_i-1} e^{-b_i λ}/Γ(c_i) dλ`.
    pub fn intensity(&self) -> Intensity {
        Intensity {
            zero_rate: 0.0,
            rates: RateMeasure::GammaSum {
                coefficient: self.log_coefficient().exp(),
                b1: self.b1,
                c1: self.c1,
                b2: self.b2,
                c2: self.c2,
            },
        }
    }
}

fn log_add(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x > y { (x, y) } else { (y, x) };
    hi + (lo - hi).exp().ln_1p()
}
