use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::ext::{deserialize_f64_or_inf, serialize_f64_or_inf, ExtendedNonnegReal};

use super::{ln_factorial, Intensity, RateMeasure};

/// Guard band around the removable singularities at `c = 0` and `c = 1`.
pub const BRANCH_EPS: f64 = 1e-6;

/// Linear derivative ratio model `ξ(t) = b + c·t`, scaled so `ψ'(1) = a`.
///
/// `c = +∞` stands for the pure linear ESAC `ψ(t) = a·t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ldr1Params {
    pub a: f64,
    pub b: f64,
    #[serde(
        serialize_with = "serialize_f64_or_inf",
        deserialize_with = "deserialize_f64_or_inf"
    )]
    pub c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Branch {
    Linear,
    Poisson,
    LogSeries,
    Power,
    General,
}

impl Ldr1Params {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let p = Self { a, b, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::domain(
                "LDR1 scale a",
                format!("must be positive, got {}", self.a),
            ));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(Error::domain(
                "LDR1 intercept b",
                format!("must be nonnegative, got {}", self.b),
            ));
        }
        if self.c.is_nan() || self.c < 0.0 {
            return Err(Error::domain(
                "LDR1 slope c",
                format!("must be nonnegative, got {}", self.c),
            ));
        }
        if self.b == 0.0 && self.c.is_finite() && self.c <= 1.0 {
            return Err(Error::domain(
                "LDR1 slope c",
                format!("must exceed 1 when b = 0, got {}", self.c),
            ));
        }
        Ok(())
    }

    /// The power-law sub-family `ψ(t) ∝ t^{1-1/c}`.
    pub fn power_law(a: f64, c: f64) -> Result<Self> {
        Self::new(a, 0.0, c)
    }

    pub fn linear(a: f64) -> Result<Self> {
        Self::new(a, 0.0, f64::INFINITY)
    }

    fn branch(&self) -> Branch {
        if self.c.is_infinite() {
            Branch::Linear
        } else if self.c < BRANCH_EPS {
            Branch::Poisson
        } else if self.b == 0.0 {
            Branch::Power
        } else if (self.c - 1.0).abs() < BRANCH_EPS {
            Branch::LogSeries
        } else {
            Branch::General
        }
    }

    pub fn with_scale(&self, a: f64) -> Self {
        Self { a, ..*self }
    }

    /// `ξ(t) = b + c·t`.
    pub fn xi(&self, t: f64) -> f64 {
        if self.c.is_infinite() {
            return f64::INFINITY;
        }
        self.b + self.c * t
    }

    /// `log ψ(t)` for `t > 0`, evaluated without forming `e^{1/b}` or other
    /// large intermediates.
    pub fn log_psi(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let (a, b, c) = (self.a, self.b, self.c);
        match self.branch() {
            Branch::Linear => a.ln() + t.ln(),
            Branch::Poisson => a.ln() + b.ln() + 1.0 / b + (-(-t / b).exp_m1()).ln(),
            Branch::LogSeries => a.ln() + (b + 1.0).ln() + (t / b).ln_1p().ln(),
            Branch::Power => a.ln() + c.ln() - (c - 1.0).ln() + (1.0 - 1.0 / c) * t.ln(),
            Branch::General => {
                let e = 1.0 - 1.0 / c;
                let l = (c * t / b).ln_1p();
                let growth = e * ((b + c * t) / (b + c)).ln();
                a.ln() + (b + c).ln() - (c - 1.0).abs().ln() + growth + (-e * l).exp_m1().abs().ln()
            }
        }
    }

    pub fn psi(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.log_psi(t).exp()
        }
    }

    /// `log |ψ^{(k)}(t)|` for `k ≥ 1`, `t > 0`. The sign is `(-1)^{k+1}`.
    pub fn log_abs_psi_deriv(&self, k: u64, t: f64) -> f64 {
        assert!(k >= 1, "derivative order starts at 1");
        let (a, b, c) = (self.a, self.b, self.c);
        match self.branch() {
            Branch::Linear => {
                if k == 1 {
                    a.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Branch::Poisson => a.ln() + (1.0 - t) / b - (k - 1) as f64 * b.ln(),
            _ => {
                let xi = b + c * t;
                a.ln() + (c * (1.0 - t) / xi).ln_1p() / c - (k - 1) as f64 * xi.ln()
                    + log_rising_tail(c, k)
            }
        }
    }

    pub fn psi_deriv(&self, k: u64, t: f64) -> f64 {
        let m = self.log_abs_psi_deriv(k, t).exp();
        if k % 2 == 1 {
            m
        } else {
            -m
        }
    }

    /// `log E(N_k(t))`.
    pub fn log_expected_nk(&self, k: u64, t: f64) -> f64 {
        self.log_abs_psi_deriv(k, t) + k as f64 * t.ln() - ln_factorial(k)
    }

    /// `E(N_k(t))` for `k = 1..=kmax`, as logs.
    pub fn log_expected_nk_upto(&self, kmax: u64, t: f64) -> Vec<f64> {
        if kmax == 0 {
            return Vec::new();
        }
        let (a, b, c) = (self.a, self.b, self.c);
        let lt = t.ln();
        match self.branch() {
            Branch::Linear | Branch::Poisson => {
                (1..=kmax).map(|k| self.log_expected_nk(k, t)).collect()
            }
            _ => {
                let xi = b + c * t;
                let base = a.ln() + (c * (1.0 - t) / xi).ln_1p() / c;
                let mut out = Vec::with_capacity(kmax as usize);
                // running Σ_{j=1}^{k-2} ln(1+jc) - ln k! + k ln t - (k-1) ln ξ
                let mut acc = lt;
                out.push(base + acc);
                for k in 2..=kmax {
                    acc += (1.0 + (k - 2) as f64 * c).ln() - (k as f64).ln() + lt - xi.ln();
                    out.push(base + acc);
                }
                out
            }
        }
    }

    pub fn pk(&self, k: u64, t: f64) -> f64 {
        (self.log_expected_nk(k, t) - self.log_psi(t)).exp()
    }

    /// `Λ = ψ'(0)`, infinite for the power law.
    pub fn lambda(&self) -> ExtendedNonnegReal {
        let (a, b, c) = (self.a, self.b, self.c);
        let v = match self.branch() {
            Branch::Linear => a,
            Branch::Poisson => a * (1.0 / b).exp(),
            Branch::Power => f64::INFINITY,
            _ => a * ((c / b).ln_1p() / c).exp(),
        };
        ExtendedNonnegReal::saturating(v)
    }

    /// `E(D) = lim ψ(t)`, finite iff `c < 1`.
    pub fn expected_richness(&self) -> ExtendedNonnegReal {
        let (a, b, c) = (self.a, self.b, self.c);
        if c >= 1.0 {
            return ExtendedNonnegReal::INFINITY;
        }
        let v = if c < BRANCH_EPS {
            (a.ln() + b.ln() + 1.0 / b).exp()
        } else {
            let e = 1.0 - 1.0 / c;
            (a.ln() + (b + c).ln() - (1.0 - c).ln() + e * (b / (b + c)).ln()).exp()
        };
        ExtendedNonnegReal::saturating(v)
    }

    /// The rate intensity `ν̃(dλ)`: a point mass for `c = 0`, otherwise the
    /// gamma-type density `K λ^{1/c-2} e^{-(b/c)λ}`.
    pub fn intensity(&self) -> Intensity {
        let (a, b, c) = (self.a, self.b, self.c);
        let rates = match self.branch() {
            Branch::Linear => {
                return Intensity {
                    zero_rate: a,
                    rates: RateMeasure::Empty,
                }
            }
            Branch::Poisson => RateMeasure::Atom {
                rate: 1.0 / b,
                mass: (a.ln() + b.ln() + 1.0 / b).exp(),
            },
            _ => {
                let s = 1.0 / c;
                let log_k = a.ln() + s * (b / c).ln_1p() - ln_gamma(s);
                RateMeasure::Gamma {
                    coefficient: log_k.exp(),
                    shape: s - 1.0,
                    rate: b / c,
                }
            }
        };
        Intensity {
            zero_rate: 0.0,
            rates,
        }
    }
}

/// `ln Π_{j=1}^{k-2} (1 + j c)`.
fn log_rising_tail(c: f64, k: u64) -> f64 {
    if k <= 2 {
        return 0.0;
    }
    if k <= 200 || c == 0.0 {
        (1..=k - 2).map(|j| (j as f64 * c).ln_1p()).sum()
    } else {
        let s = 1.0 / c;
        (k - 2) as f64 * c.ln() + ln_gamma(s + (k - 1) as f64) - ln_gamma(s + 1.0)
    }
}
