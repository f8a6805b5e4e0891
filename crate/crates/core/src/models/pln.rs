use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::ExtendedNonnegReal;
use crate::quad::{self, Tolerance};

use super::{ln_factorial, Intensity, RateMeasure};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Poisson–lognormal model: `D ~ Poisson(γ)` species with lognormal rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlnParams {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl PlnParams {
    pub fn new(mu: f64, sigma: f64, gamma: f64) -> Result<Self> {
        let p = Self { mu, sigma, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::domain(
                "PLN location mu",
                format!("must be finite, got {}", self.mu),
            ));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::domain(
                "PLN scale sigma",
                format!("must be positive, got {}", self.sigma),
            ));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::domain(
                "PLN richness gamma",
                format!("must be positive, got {}", self.gamma),
            ));
        }
        Ok(())
    }

    pub fn with_scale(&self, gamma: f64) -> Self {
        Self { gamma, ..*self }
    }

    /// `ω_k(μ, σ)`, the Poisson–lognormal probability of `k` at unit time.
    pub fn pmf(&self, k: u64) -> Result<f64> {
        Ok(log_omega(k, self.mu, self.sigma)?.exp())
    }

    pub fn log_psi(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.gamma.ln() + log_one_minus_omega0(self.mu + t.ln(), self.sigma)?)
    }

    pub fn psi(&self, t: f64) -> Result<f64> {
        Ok(self.log_psi(t)?.exp())
    }

    pub fn log_expected_nk(&self, k: u64, t: f64) -> Result<f64> {
        Ok(self.gamma.ln() + log_omega(k, self.mu + t.ln(), self.sigma)?)
    }

    pub fn log_expected_nk_upto(&self, kmax: u64, t: f64) -> Result<Vec<f64>> {
        (1..=kmax).map(|k| self.log_expected_nk(k, t)).collect()
    }

    pub fn log_abs_psi_deriv(&self, k: u64, t: f64) -> Result<f64> {
        Ok(self.log_expected_nk(k, t)? - k as f64 * t.ln() + ln_factorial(k))
    }

    pub fn lambda(&self) -> ExtendedNonnegReal {
        ExtendedNonnegReal::saturating(self.gamma * (self.mu + 0.5 * self.sigma * self.sigma).exp())
    }

    pub fn expected_richness(&self) -> ExtendedNonnegReal {
        ExtendedNonnegReal::saturating(self.gamma)
    }

    pub fn intensity(&self) -> Intensity {
        Intensity {
            zero_rate: 0.0,
            rates: RateMeasure::Lognormal {
                mass: self.gamma,
                mu: self.mu,
                sigma: self.sigma,
            },
        }
    }
}

/// `log ω_k(μ, σ) = log ∫ Pois(k; e^z) φ((z-μ)/σ)/σ dz`.
///
/// The log-integrand is strictly concave in `z`, so it is integrated on a
/// window around its mode sized by the curvature on each side.
pub fn log_omega(k: u64, mu: f64, sigma: f64) -> Result<f64> {
    let kf = k as f64;
    let s2 = sigma * sigma;
    let h = |z: f64| kf * z - z.exp() - (z - mu) * (z - mu) / (2.0 * s2);
    let dh = |z: f64| kf - z.exp() - (z - mu) / s2;
    let zstar = concave_mode(&dh, mu, sigma)?;
    let hstar = h(zstar);
    let right = 1.0 / (zstar.exp() + 1.0 / s2).sqrt();
    let pts = [
        zstar - 12.0 * sigma,
        zstar - 3.0 * sigma.min(4.0 * right),
        zstar,
        zstar + 3.0 * right,
        zstar + 12.0 * right,
    ];
    let mut pts = pts.to_vec();
    pts.dedup();
    let est = quad::integrate_with_breaks(
        |z| (h(z) - hstar).exp(),
        &pts,
        Tolerance {
            rel: 1e-11,
            abs: 0.0,
        },
    )?;
    Ok(hstar + est.value.ln() - ln_factorial(k) - sigma.ln() - LN_SQRT_2PI)
}

/// `log(1 - ω_0(μ, σ))`, integrated directly so that tiny rates keep full
/// relative accuracy.
pub fn log_one_minus_omega0(mu: f64, sigma: f64) -> Result<f64> {
    let s2 = sigma * sigma;
    // log[(1 - e^{-e^z}) φ] is concave too, so the same windowing applies
    let g = |z: f64| {
        let m = -(-z.exp()).exp_m1();
        m.ln() - (z - mu) * (z - mu) / (2.0 * s2)
    };
    let dg = |z: f64| {
        let e = z.exp();
        // d/dz log(1 - e^{-e^z}) = e^z e^{-e^z} / (1 - e^{-e^z})
        let d = if e < 1e-8 {
            1.0 - 0.5 * e
        } else {
            e / e.exp_m1()
        };
        d - (z - mu) / s2
    };
    let zstar = concave_mode(&dg, mu, sigma)?;
    let gstar = g(zstar);
    let pts = [
        zstar - 12.0 * sigma,
        zstar - 2.0 * sigma,
        zstar,
        zstar + 2.0 * sigma,
        zstar + 12.0 * sigma,
    ];
    let est = quad::integrate_with_breaks(
        |z| (g(z) - gstar).exp(),
        &pts,
        Tolerance {
            rel: 1e-11,
            abs: 0.0,
        },
    )?;
    Ok(gstar + est.value.ln() - sigma.ln() - LN_SQRT_2PI)
}

/// Root of a strictly decreasing derivative, by bracketing and bisection.
fn concave_mode(dh: &impl Fn(f64) -> f64, start: f64, width: f64) -> Result<f64> {
    let step = width.max(1.0);
    let (mut lo, mut hi) = (start - step, start + step);
    let mut grow = step;
    while dh(lo) < 0.0 {
        grow *= 2.0;
        lo -= grow;
        if lo < -1e6 {
            return Err(Error::Numeric(
                "failed to bracket the lognormal mode".into(),
            ));
        }
    }
    grow = step;
    while dh(hi) > 0.0 {
        grow *= 2.0;
        hi += grow;
        if hi > 1e6 {
            return Err(Error::Numeric(
                "failed to bracket the lognormal mode".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dh(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn degenerate_mixing_is_poisson() {
        let mu = 1.3f64;
        let lam = mu.exp();
        for k in 0..15u64 {
            let want = (k as f64 * lam.ln() - lam - ln_factorial(k)).exp();
            let got = log_omega(k, mu, 1e-4).unwrap().exp();
            assert!((got - want).abs() < 1e-4, "{k}: {got} vs {want}");
        }
    }

    #[test]
    fn pmf_sums_to_one() {
        for (mu, sigma) in [(1.23, 0.8), (-2.0, 0.5), (2.5, 0.6)] {
            let mut total = 0.0;
            for k in 0..5000u64 {
                let w = log_omega(k, mu, sigma).unwrap().exp();
                assert!(w >= 0.0);
                total += w;
                if k > 50 && w < 1e-18 {
                    break;
                }
            }
            assert!((total - 1.0).abs() < 1e-8, "{mu} {sigma}: {total}");
            let one_minus = log_one_minus_omega0(mu, sigma).unwrap().exp();
            assert_relative_eq!(
                one_minus,
                1.0 - log_omega(0, mu, sigma).unwrap().exp(),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn bird_gamma() {
        let w0 = log_omega(0, 1.23, 1.30).unwrap().exp();
        let g = 72.0 / (1.0 - w0);
        assert!((g - 85.2).abs() < 0.5, "{g}");
    }

    #[test]
    fn tiny_rates_keep_relative_accuracy() {
        // 1 - ω_0 ≈ E(λ) = e^{μ+σ²/2} when rates are tiny
        let v = log_one_minus_omega0(-30.0, 0.5).unwrap();
        assert_relative_eq!(v, -30.0 + 0.125, max_relative = 1e-9);
    }
}
