//! Parametric ESAC families.
//!
//! Every family is described by its expected species accumulation curve
//! `ψ(t) = E(N_+(t))`. The expected frequency counts follow from the
//! derivatives, `E(N_k(t)) = (-1)^{k+1} t^k ψ^{(k)}(t) / k!`, and the SAD is
//! `p_k(t) = E(N_k(t)) / ψ(t)`. Evaluation is done on the log scale wherever
//! magnitudes can be extreme.

mod ldr1;
mod pln;
mod rdr1;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::ext::ExtendedNonnegReal;

pub use ldr1::{Ldr1Params, BRANCH_EPS};
pub use pln::{log_omega, log_one_minus_omega0, PlnParams};
pub use rdr1::Rdr1Params;

/// `ln k!`.
pub fn ln_factorial(k: u64) -> f64 {
    if k < 2 {
        0.0
    } else if k < 32 {
        (2..=k).map(|j| (j as f64).ln()).sum()
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

/// LDR1 plus a mass `α = ν({0})` of zero-rate species: `ψ(t) = α t + ψ_inner(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ldr2Params {
    pub zero_rate: f64,
    pub inner: Ldr1Params,
}

impl Ldr2Params {
    pub fn new(zero_rate: f64, inner: Ldr1Params) -> Result<Self> {
        let p = Self { zero_rate, inner };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zero_rate.is_finite() && self.zero_rate >= 0.0) {
            return Err(Error::domain(
                "LDR2 zero-rate mass",
                format!("must be nonnegative, got {}", self.zero_rate),
            ));
        }
        self.inner.validate()
    }

    pub fn psi(&self, t: f64) -> f64 {
        self.zero_rate * t.max(0.0) + self.inner.psi(t)
    }

    pub fn psi_deriv(&self, k: u64, t: f64) -> f64 {
        let inner = self.inner.psi_deriv(k, t);
        if k == 1 {
            inner + self.zero_rate
        } else {
            inner
        }
    }

    pub fn log_expected_nk_upto(&self, kmax: u64, t: f64) -> Vec<f64> {
        let mut v = self.inner.log_expected_nk_upto(kmax, t);
        if let Some(first) = v.first_mut() {
            *first = log_sum(*first, (self.zero_rate * t).ln());
        }
        v
    }
}

fn log_sum(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let (hi, lo) = if x > y { (x, y) } else { (y, x) };
    hi + (lo - hi).exp().ln_1p()
}

/// Model family selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Ldr1,
    Ldr2,
    Rdr1,
    Pln,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Ldr1, Family::Ldr2, Family::Rdr1, Family::Pln];

    pub fn name(self) -> &'static str {
        match self {
            Family::Ldr1 => "ldr1",
            Family::Ldr2 => "ldr2",
            Family::Rdr1 => "rdr1",
            Family::Pln => "pln",
        }
    }

    /// Free parameters apart from the profiled scale.
    pub fn shape_params(self) -> usize {
        match self {
            Family::Ldr1 => 2,
            Family::Ldr2 => 3,
            Family::Rdr1 => 4,
            Family::Pln => 2,
        }
    }

    pub fn total_params(self) -> usize {
        self.shape_params() + 1
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown family `{s}` (expected ldr1, ldr2, rdr1 or pln)"
                ))
            })
    }
}

/// A fitted or user-specified model, tagged by family in JSON.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Model {
    Ldr1(Ldr1Params),
    Ldr2(Ldr2Params),
    Rdr1(Rdr1Params),
    Pln(PlnParams),
}

impl From<Ldr1Params> for Model {
    fn from(p: Ldr1Params) -> Self {
        Model::Ldr1(p)
    }
}

impl From<Ldr2Params> for Model {
    fn from(p: Ldr2Params) -> Self {
        Model::Ldr2(p)
    }
}

impl From<Rdr1Params> for Model {
    fn from(p: Rdr1Params) -> Self {
        Model::Rdr1(p)
    }
}

impl From<PlnParams> for Model {
    fn from(p: PlnParams) -> Self {
        Model::Pln(p)
    }
}

impl Model {
    pub fn family(&self) -> Family {
        match self {
            Model::Ldr1(_) => Family::Ldr1,
            Model::Ldr2(_) => Family::Ldr2,
            Model::Rdr1(_) => Family::Rdr1,
            Model::Pln(_) => Family::Pln,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Ldr1(p) => p.validate(),
            Model::Ldr2(p) => p.validate(),
            Model::Rdr1(p) => p.validate(),
            Model::Pln(p) => p.validate(),
        }
    }

    /// Multiplies `ν` by `factor` (every count expectation scales with it).
    pub fn scaled(&self, factor: f64) -> Model {
        match *self {
            Model::Ldr1(p) => Model::Ldr1(p.with_scale(p.a * factor)),
            Model::Ldr2(p) => Model::Ldr2(Ldr2Params {
                zero_rate: p.zero_rate * factor,
                inner: p.inner.with_scale(p.inner.a * factor),
            }),
            Model::Rdr1(p) => Model::Rdr1(p.with_scale(p.a * factor)),
            Model::Pln(p) => Model::Pln(p.with_scale(p.gamma * factor)),
        }
    }

    pub fn psi(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        match self {
            Model::Ldr1(p) => Ok(p.psi(t)),
            Model::Ldr2(p) => Ok(p.psi(t)),
            Model::Rdr1(p) => p.psi(t),
            Model::Pln(p) => p.psi(t),
        }
    }

    pub fn log_psi(&self, t: f64) -> Result<f64> {
        match self {
            Model::Ldr1(p) => Ok(p.log_psi(t)),
            Model::Ldr2(p) => Ok(p.psi(t).ln()),
            Model::Rdr1(p) => p.log_psi(t),
            Model::Pln(p) => p.log_psi(t),
        }
    }

    /// `log E(N_k(t))` for `k = 1..=kmax`.
    pub fn log_expected_nk_upto(&self, kmax: u64, t: f64) -> Result<Vec<f64>> {
        match self {
            Model::Ldr1(p) => Ok(p.log_expected_nk_upto(kmax, t)),
            Model::Ldr2(p) => Ok(p.log_expected_nk_upto(kmax, t)),
            Model::Rdr1(p) => Ok(p.log_expected_nk_upto(kmax, t)),
            Model::Pln(p) => p.log_expected_nk_upto(kmax, t),
        }
    }

    pub fn log_expected_nk(&self, k: u64, t: f64) -> Result<f64> {
        match self {
            Model::Ldr1(p) => Ok(p.log_expected_nk(k, t)),
            Model::Pln(p) => p.log_expected_nk(k, t),
            _ => Ok(*self.log_expected_nk_upto(k, t)?.last().expect("k >= 1")),
        }
    }

    pub fn expected_nk(&self, k: u64, t: f64) -> Result<f64> {
        Ok(self.log_expected_nk(k, t)?.exp())
    }

    /// `log |ψ^{(k)}(t)|`; the sign of `ψ^{(k)}` is `(-1)^{k+1}`.
    pub fn log_abs_psi_deriv(&self, k: u64, t: f64) -> Result<f64> {
        Ok(self.log_expected_nk(k, t)? - k as f64 * t.ln() + ln_factorial(k))
    }

    pub fn psi_deriv(&self, k: u64, t: f64) -> Result<f64> {
        if let Model::Ldr2(p) = self {
            return Ok(p.psi_deriv(k, t));
        }
        let m = self.log_abs_psi_deriv(k, t)?.exp();
        Ok(if k % 2 == 1 { m } else { -m })
    }

    /// `p_k(t)`; underflows to 0 for very large `k`.
    pub fn pk(&self, k: u64, t: f64) -> Result<f64> {
        Ok((self.log_expected_nk(k, t)? - self.log_psi(t)?).exp())
    }

    /// `p_1(t), …, p_kmax(t)`.
    pub fn sad_upto(&self, kmax: u64, t: f64) -> Result<Vec<f64>> {
        let lp = self.log_psi(t)?;
        Ok(self
            .log_expected_nk_upto(kmax, t)?
            .into_iter()
            .map(|l| (l - lp).exp())
            .collect())
    }

    /// `ξ(t) = -ψ'(t)/ψ''(t)`.
    pub fn xi(&self, t: f64) -> Result<f64> {
        match self {
            Model::Ldr1(p) => Ok(p.xi(t)),
            Model::Rdr1(p) => Ok(p.xi(t)),
            _ => Ok(-self.psi_deriv(1, t)? / self.psi_deriv(2, t)?),
        }
    }

    /// The SAD pgf `h_t(s) = 1 - ψ((1-s)t)/ψ(t)` for `s ≤ 1`.
    pub fn pgf(&self, t: f64, s: f64) -> Result<f64> {
        if s > 1.0 {
            return Err(Error::domain(
                "pgf argument s",
                format!("must be at most 1, got {s}"),
            ));
        }
        if s == 1.0 {
            return Ok(1.0);
        }
        Ok(1.0 - (self.log_psi((1.0 - s) * t)? - self.log_psi(t)?).exp())
    }

    /// `Λ = ψ'(0)`, the expected total rate.
    pub fn lambda(&self) -> ExtendedNonnegReal {
        match self {
            Model::Ldr1(p) => p.lambda(),
            Model::Ldr2(p) => p.inner.lambda() + p.zero_rate,
            Model::Rdr1(p) => p.lambda(),
            Model::Pln(p) => p.lambda(),
        }
    }

    /// `E(S(t)) = t·Λ`.
    pub fn expected_individuals(&self, t: f64) -> ExtendedNonnegReal {
        self.lambda() * t
    }

    /// `E(D) = lim_{t→∞} ψ(t)`.
    pub fn expected_richness(&self) -> Result<ExtendedNonnegReal> {
        match self {
            Model::Ldr1(p) => Ok(p.expected_richness()),
            Model::Ldr2(p) if p.zero_rate > 0.0 => Ok(ExtendedNonnegReal::INFINITY),
            Model::Ldr2(p) => Ok(p.inner.expected_richness()),
            Model::Rdr1(p) => p.expected_richness(),
            Model::Pln(p) => Ok(p.expected_richness()),
        }
    }

    pub fn intensity(&self) -> Intensity {
        match self {
            Model::Ldr1(p) => p.intensity(),
            Model::Ldr2(p) => {
                let mut i = p.inner.intensity();
                i.zero_rate += p.zero_rate;
                i
            }
            Model::Rdr1(p) => p.intensity(),
            Model::Pln(p) => p.intensity(),
        }
    }

    /// Model-based Good–Turing share `(k+1) E(N_{k+1}(t)) / E(S(t))`.
    pub fn good_turing_share(&self, k: u64, t: f64) -> Result<f64> {
        let s = self.expected_individuals(t);
        if s.is_infinite() {
            return Err(Error::Undefined(
                "expected number of individuals is infinite".into(),
            ));
        }
        Ok((k + 1) as f64 * self.expected_nk(k + 1, t)? / s.value())
    }
}

/// The intensity measure of species rates: a zero-rate mass `ν({0})` plus
/// a description of the positive rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intensity {
    pub zero_rate: f64,
    pub rates: RateMeasure,
}

/// Positive-rate part of the species intensity `ν̃(dλ) = ν(dλ)/λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateMeasure {
    /// No positive-rate species.
    Empty,
    /// `mass` species with common `rate`.
    Atom { rate: f64, mass: f64 },
    /// `ν̃(dλ) = coefficient · λ^{shape-1} e^{-rate·λ} dλ` (shape may be ≤ 0).
    Gamma {
        coefficient: f64,
        shape: f64,
        rate: f64,
    },
    /// `ν = coefficient · (m1 ∗ m2)` with `m_i(dλ) = λ^{c_i-1} e^{-b_i λ}/Γ(c_i) dλ`
    /// (`m2` is the unit point mass at 0 when `c2 = 0`).
    GammaSum {
        coefficient: f64,
        b1: f64,
        c1: f64,
        b2: f64,
        c2: f64,
    },
    /// `mass` species with `Lognormal(mu, sigma²)` rates.
    Lognormal { mass: f64, mu: f64, sigma: f64 },
}

impl RateMeasure {
    /// `ν̃((0, ∞))`, the expected number of positive-rate species.
    pub fn total_mass(&self) -> ExtendedNonnegReal {
        let v = match *self {
            RateMeasure::Empty => 0.0,
            RateMeasure::Atom { mass, .. } | RateMeasure::Lognormal { mass, .. } => mass,
            RateMeasure::Gamma {
                coefficient,
                shape,
                rate,
            } => {
                if shape <= 0.0 || rate <= 0.0 {
                    f64::INFINITY
                } else {
                    (coefficient.ln() + ln_gamma(shape) - shape * rate.ln()).exp()
                }
            }
            RateMeasure::GammaSum {
                coefficient,
                b1,
                c1,
                b2,
                c2,
            } => {
                if c1 + c2 <= 1.0 {
                    f64::INFINITY
                } else {
                    // ∫ν̃ = ∫_0^∞ ψ'(s) ds, the RDR1 richness with t0 = 1
                    let t0 = 1.0;
                    let a = (coefficient.ln() - c1 * (t0 + b1).ln() - c2 * (t0 + b2).ln()).exp();
                    match Rdr1Params::new(a, b1, b2, c1, c2, t0).and_then(|p| p.expected_richness())
                    {
                        Ok(v) => v.value(),
                        Err(_) => f64::NAN,
                    }
                }
            }
        };
        ExtendedNonnegReal::new(v).unwrap_or(ExtendedNonnegReal::INFINITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ldr2_additivity() {
        let inner = Ldr1Params::new(1.0, 1.0, 1.0).unwrap();
        let m = Ldr2Params::new(1.0, inner).unwrap();
        assert_relative_eq!(m.psi(1.0), 1.0 + 2.0 * 2f64.ln(), max_relative = 1e-14);
        let zero = Model::Ldr2(Ldr2Params::new(0.0, inner).unwrap());
        let plain = Model::Ldr1(inner);
        for k in 1..6 {
            assert_relative_eq!(
                zero.pk(k, 0.7).unwrap(),
                plain.pk(k, 0.7).unwrap(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn ldr2_second_ratio_is_linear() {
        let inner = Ldr1Params::new(3.0, 0.4, 0.5).unwrap();
        let m = Model::Ldr2(Ldr2Params::new(2.0, inner).unwrap());
        let xi2 = |t: f64| -m.psi_deriv(2, t).unwrap() / m.psi_deriv(3, t).unwrap();
        let xi1 = |t: f64| m.xi(t).unwrap();
        let ts = [0.2, 0.5, 1.0, 1.5, 3.0];
        // second differences vanish for a linear function on an even grid
        let lin = |f: &dyn Fn(f64) -> f64| {
            let g: Vec<f64> = [0.5, 1.0, 1.5].iter().map(|&t| f(t)).collect();
            (g[0] - 2.0 * g[1] + g[2]).abs()
        };
        assert!(lin(&xi2) < 1e-10);
        assert!(lin(&xi1) > 1e-3);
        for t in ts {
            // -ψ''/ψ''' = ξ(t)/(1+c) for the LDR1 part
            assert_relative_eq!(xi2(t), (0.4 + 0.5 * t) / 1.5, max_relative = 1e-10);
        }
    }

    #[test]
    fn pgf_power_law() {
        let m = Model::Ldr1(Ldr1Params::new(1.0, 0.0, 2.0).unwrap());
        for s in [-2.0, 0.0, 0.3, 0.9] {
            assert_relative_eq!(
                m.pgf(1.0, s).unwrap(),
                1.0 - (1.0 - s).sqrt(),
                max_relative = 1e-12
            );
        }
        assert_eq!(m.pgf(3.0, 1.0).unwrap(), 1.0);
        assert!(m.pgf(1.0, 1.5).is_err());
        assert!(m.good_turing_share(0, 1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let models = [
            Model::Ldr1(Ldr1Params::new(1.0, 0.0, f64::INFINITY).unwrap()),
            Model::Ldr2(Ldr2Params::new(0.5, Ldr1Params::new(1.0, 0.2, 0.3).unwrap()).unwrap()),
            Model::Rdr1(Rdr1Params::new(1.0, 0.1, 2.0, 0.3, 0.4, 1.0).unwrap()),
            Model::Pln(PlnParams::new(1.0, 0.5, 30.0).unwrap()),
        ];
        for m in models {
            let s = serde_json::to_string(&m).unwrap();
            let back: Model = serde_json::from_str(&s).unwrap();
            assert_eq!(back, m);
        }
        let s = serde_json::to_string(&models[0]).unwrap();
        assert!(
            s.contains("\"family\":\"ldr1\"") && s.contains("\"inf\""),
            "{s}"
        );
    }

    #[test]
    fn family_parsing() {
        assert_eq!("RDR1".parse::<Family>().unwrap(), Family::Rdr1);
        assert!("nope".parse::<Family>().is_err());
    }

    #[test]
    fn gamma_sum_mass_matches_richness() {
        let p = Rdr1Params::new(1318.1, 0.617, 198.9, 0.211, 45.362, 1.0).unwrap();
        let m = p.intensity().rates.total_mass().value();
        assert_relative_eq!(
            m,
            p.expected_richness().unwrap().value(),
            max_relative = 1e-9
        );
    }
}
