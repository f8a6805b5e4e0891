//! Richness from the rare-species counts `n_1, n_2, n_3`.
//!
//! Species seen at most three times are treated as an LDR1 community, whose
//! slope `c` is estimated from the ratio `E(N_1)E(N_3)/E(N_2)^2 = 2(c+1)/3`.
//! `c = 0` gives Chao1; the estimator `Ê*(D)` uses the clamped plug-in `ĉ_F`.

use std::cell::RefCell;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::FrequencyOfFrequencies;
use crate::error::{Error, Result};
use crate::ext::{deserialize_f64_or_inf, serialize_f64_or_inf, ExtendedNonnegReal};
use crate::quad::{self, Tolerance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Chao1,
    /// Chao1 times `(S - 1)/S`, the small-sample form common in software.
    Chao1Corrected,
    EStar,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Chao1 => "chao1",
            Method::Chao1Corrected => "chao1_corrected",
            Method::EStar => "e_star",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RichnessEstimate {
    pub unseen: ExtendedNonnegReal,
    pub total: ExtendedNonnegReal,
    pub c_hat_star: Option<f64>,
    pub c_hat_f: Option<f64>,
    pub method: Method,
}

/// `ĉ* = 3 n_1 n_3 / (2 n_2²) - 1`.
pub fn c_star(fof: &FrequencyOfFrequencies) -> Result<f64> {
    let (n1, n2, n3) = rare(fof);
    if n2 == 0 {
        return Err(Error::Undefined("the slope estimate needs n_2 > 0".into()));
    }
    // exact integer numerator and denominator, one rounding at the end
    let num = 3 * n1 as u128 * n3 as u128;
    let den = 2 * n2 as u128 * n2 as u128;
    Ok(num as f64 / den as f64 - 1.0)
}

/// `ĉ_F = max(min(ĉ*, n_1/(2 n_2)), 0)`.
pub fn c_f(fof: &FrequencyOfFrequencies) -> Result<f64> {
    let (n1, n2, _) = rare(fof);
    let cs = c_star(fof)?;
    Ok(cs.min(n1 as f64 / (2.0 * n2 as f64)).max(0.0))
}

fn rare(fof: &FrequencyOfFrequencies) -> (u64, u64, u64) {
    (fof.get(1), fof.get(2), fof.get(3))
}

/// Estimated number of unseen species and the implied total.
pub fn unseen(fof: &FrequencyOfFrequencies, method: Method) -> RichnessEstimate {
    let (n1, n2, _) = rare(fof);
    let (c_hat_star, c_hat_f) = if n2 > 0 {
        (c_star(fof).ok(), c_f(fof).ok())
    } else {
        (None, None)
    };
    let unseen = if n2 == 0 {
        if n1 > 0 {
            ExtendedNonnegReal::INFINITY
        } else {
            ExtendedNonnegReal::ZERO
        }
    } else {
        let chao1 = (n1 as f64).powi(2) / (2.0 * n2 as f64);
        match method {
            Method::Chao1 => ExtendedNonnegReal::saturating(chao1),
            Method::Chao1Corrected => {
                let s = fof.s_total() as f64;
                ExtendedNonnegReal::saturating(chao1 * (s - 1.0) / s)
            }
            Method::EStar => {
                let c = c_hat_f.expect("n_2 > 0");
                if c >= 1.0 {
                    ExtendedNonnegReal::INFINITY
                } else {
                    ExtendedNonnegReal::saturating(chao1 / (1.0 - c))
                }
            }
        }
    };
    RichnessEstimate {
        unseen,
        total: unseen + fof.n_plus() as f64,
        c_hat_star,
        c_hat_f,
        method,
    }
}

/// One-sided test of `H0: 3E(N_1)E(N_3) - 2E(N_2)^2 ≤ 0`, i.e. that the rare
/// counts are consistent with equal rates (where Chao1 is unbiased).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncPoissonTest {
    #[serde(rename = "T")]
    pub t: f64,
    pub var_t: f64,
    pub z: f64,
    pub p_value: f64,
}

pub fn trunc_poisson_test(fof: &FrequencyOfFrequencies) -> Result<TruncPoissonTest> {
    let (n1, n2, n3) = rare(fof);
    let (n1, n2, n3) = (n1 as f64, n2 as f64, n3 as f64);
    let t = 3.0 * n1 * n3 - 2.0 * n2 * (n2 - 1.0);
    let var_t = 9.0 * n1 * n3 * (n1 + n3 - 1.0) + 8.0 * n2 * (3.0 - 5.0 * n2 + 2.0 * n2 * n2);
    if !(var_t > 0.0) {
        return Err(Error::Undefined(format!(
            "the variance estimate of T is {var_t}; the test needs more rare species"
        )));
    }
    let z = t / var_t.sqrt();
    let p_value = Normal::standard().sf(z);
    Ok(TruncPoissonTest {
        t,
        var_t,
        z,
        p_value,
    })
}

/// How `ξ(t)` continues beyond `t0`.
pub enum XiRule<'a> {
    /// `ξ(t) = ξ̂(t0) = t0 n_1/(2 n_2)`; the limit is Chao1.
    ZerothOrder,
    /// `ξ(t) = ξ̂(t0) + ĉ_F (t - t0)`; the limit is `Ê*(D)`.
    ModifiedFirstOrder,
    /// Any positive function on `[t0, t]`.
    Custom(&'a dyn Fn(f64) -> f64),
}

/// The line `ξ(t) = xi0 + slope (t - t0)` used by the built-in rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearXi {
    #[serde(
        serialize_with = "serialize_f64_or_inf",
        deserialize_with = "deserialize_f64_or_inf"
    )]
    pub xi0: f64,
    pub slope: f64,
}

pub fn xi_line(fof: &FrequencyOfFrequencies, rule: &XiRule) -> Result<Option<LinearXi>> {
    let (n1, n2, _) = rare(fof);
    let xi0 = if n2 == 0 {
        f64::INFINITY
    } else {
        fof.t0() * n1 as f64 / (2.0 * n2 as f64)
    };
    Ok(match rule {
        XiRule::ZerothOrder => Some(LinearXi { xi0, slope: 0.0 }),
        XiRule::ModifiedFirstOrder => Some(LinearXi {
            xi0,
            slope: if n2 == 0 { 0.0 } else { c_f(fof)? },
        }),
        XiRule::Custom(_) => None,
    })
}

/// `ψ(t) = n_+ + (n_1/t0) ∫_{t0}^t exp(-∫_{t0}^y dx/ξ(x)) dy` for `t ≥ t0`.
///
/// `t = ∞` gives the limiting richness for the built-in rules.
pub fn extrapolate_psi(
    fof: &FrequencyOfFrequencies,
    rule: &XiRule,
    t: f64,
) -> Result<ExtendedNonnegReal> {
    let t0 = fof.t0();
    if t.is_nan() || t < t0 {
        return Err(Error::domain(
            "t",
            format!("extrapolation needs t >= {t0}, got {t}"),
        ));
    }
    let n_plus = fof.n_plus() as f64;
    let slope0 = fof.get(1) as f64 / t0;
    if slope0 == 0.0 || t == t0 {
        return Ok(ExtendedNonnegReal::saturating(n_plus));
    }
    let integral = match xi_line(fof, rule)? {
        Some(line) => linear_integral(line, t - t0),
        None => {
            let XiRule::Custom(xi) = rule else {
                unreachable!()
            };
            if t.is_infinite() {
                return Err(Error::domain("t", "a custom rule needs a finite horizon"));
            }
            custom_integral(*xi, t0, t)?
        }
    };
    Ok(ExtendedNonnegReal::saturating(n_plus + slope0 * integral))
}

/// `∫_0^T (1 + c u/ξ0)^{-1/c} du`, with the `c = 0` and `c = 1` limits.
fn linear_integral(line: LinearXi, horizon: f64) -> f64 {
    let LinearXi { xi0, slope: c } = line;
    if xi0.is_infinite() {
        return horizon;
    }
    if horizon.is_infinite() {
        return if c >= 1.0 {
            f64::INFINITY
        } else {
            xi0 / (1.0 - c)
        };
    }
    let x = horizon / xi0;
    if c == 0.0 {
        return -xi0 * (-x).exp_m1();
    }
    if c == 1.0 {
        return xi0 * x.ln_1p();
    }
    let e = 1.0 - 1.0 / c;
    xi0 / (c - 1.0) * (e * (c * x).ln_1p()).exp_m1()
}

fn custom_integral(xi: &dyn Fn(f64) -> f64, t0: f64, t: f64) -> Result<f64> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let tol = Tolerance {
        rel: 1e-10,
        abs: 0.0,
    };
    let recip = |x: f64| {
        let v = xi(x);
        if !(v > 0.0) && failure.borrow().is_none() {
            *failure.borrow_mut() = Some(Error::domain(
                "xi rule",
                format!("must be positive on the path, got {v} at t = {x}"),
            ));
        }
        1.0 / v
    };
    let outer = quad::integrate(
        |y| {
            if y <= t0 {
                return 1.0;
            }
            match quad::integrate(recip, t0, y, tol) {
                Ok(e) => (-e.value).exp(),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        },
        t0,
        t,
        tol,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(outer?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use approx::assert_relative_eq;

    #[test]
    fn slopes() {
        assert_relative_eq!(
            c_star(&datasets::accident()).unwrap(),
            3.0 * 1317.0 * 42.0 / (2.0 * 239.0 * 239.0) - 1.0
        );
        assert_relative_eq!(
            c_star(&datasets::bird()).unwrap(),
            0.145_833_333_333_333_3,
            max_relative = 1e-14
        );
        let swine = datasets::swine();
        assert!((c_f(&swine).unwrap() - 3.2424).abs() < 1e-4);
        let no3 = FrequencyOfFrequencies::new(1.0, [(1, 4), (2, 2)]).unwrap();
        assert_eq!(c_star(&no3).unwrap(), -1.0);
        assert_eq!(c_f(&no3).unwrap(), 0.0);
    }

    #[test]
    fn branches() {
        let only1 = FrequencyOfFrequencies::new(1.0, [(1, 3), (5, 1)]).unwrap();
        assert!(unseen(&only1, Method::EStar).unseen.is_infinite());
        let none = FrequencyOfFrequencies::new(1.0, [(5, 2)]).unwrap();
        let r = unseen(&none, Method::Chao1);
        assert_eq!(r.unseen, ExtendedNonnegReal::ZERO);
        assert_eq!(r.total.value(), 2.0);
        assert!(unseen(&datasets::swine(), Method::EStar)
            .total
            .is_infinite());
    }

    #[test]
    fn reported_totals() {
        let acc = unseen(&datasets::accident(), Method::EStar);
        assert!((acc.total.value() - 8249.2).abs() < 0.5);
        assert!((unseen(&datasets::bird(), Method::EStar).total.value() - 77.9).abs() < 0.1);
        assert!(
            (unseen(&datasets::bird(), Method::Chao1Corrected)
                .total
                .value()
                - 77.0)
                .abs()
                < 0.1
        );
    }

    #[test]
    fn bird_test_statistic() {
        let r = trunc_poisson_test(&datasets::bird()).unwrap();
        assert_eq!(r.t, 66.0);
        assert_eq!(r.var_t, 41976.0);
        assert!((r.p_value - 0.374).abs() < 0.002);
    }

    #[test]
    fn extrapolation_limits() {
        for f in [datasets::accident(), datasets::bird(), datasets::tomato()] {
            let chao = unseen(&f, Method::Chao1).total.value();
            let z = extrapolate_psi(&f, &XiRule::ZerothOrder, f64::INFINITY).unwrap();
            assert_relative_eq!(z.value(), chao, max_relative = 1e-12);
            let far = extrapolate_psi(&f, &XiRule::ZerothOrder, 1e6).unwrap();
            assert_relative_eq!(far.value(), chao, max_relative = 1e-4);
        }
        let acc = datasets::accident();
        let e = extrapolate_psi(&acc, &XiRule::ModifiedFirstOrder, f64::INFINITY).unwrap();
        assert!((e.value() - 8249.2).abs() < 0.5);
    }

    #[test]
    fn custom_rule_matches_closed_form() {
        let acc = datasets::accident();
        let line = xi_line(&acc, &XiRule::ModifiedFirstOrder).unwrap().unwrap();
        let xi = |x: f64| line.xi0 + line.slope * (x - 1.0);
        for t in [1.3, 4.0, 25.0] {
            let a = extrapolate_psi(&acc, &XiRule::ModifiedFirstOrder, t)
                .unwrap()
                .value();
            let b = extrapolate_psi(&acc, &XiRule::Custom(&xi), t)
                .unwrap()
                .value();
            assert_relative_eq!(a, b, max_relative = 1e-8);
        }
        let eps = 1e-6;
        let near = extrapolate_psi(&acc, &XiRule::ZerothOrder, 1.0 + eps)
            .unwrap()
            .value();
        assert!((near - (1621.0 + eps * 1317.0)).abs() < 1e-6);
        let bad = |x: f64| 1.0 - x;
        assert!(extrapolate_psi(&acc, &XiRule::Custom(&bad), 2.0).is_err());
    }
}
