//! Inference from the empirical species accumulation curve alone.
//!
//! The first appearance times of the recorded species are iid with
//! distribution function `ψ(t)/ψ(t0)` given `n_+`, so the empirical SAC is
//! `n_+` times an empirical distribution function. That gives a closed-form
//! power-law MLE, a multinomial likelihood for SACs seen only at
//! breakpoints, and DKW confidence bands. The least-squares curve fits
//! commonly applied to SACs are included as baselines.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::BinnedSac;
use crate::error::{Error, Result};
use crate::models::{Ldr1Params, Model};
use crate::nonparam::least_squares;
use crate::optim::{self, Options};
use crate::rng;

/// First appearance times `0 < r_i ≤ t0` of the recorded species.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstAppearanceSample {
    times: Vec<f64>,
    t0: f64,
}

impl FirstAppearanceSample {
    pub fn new(mut times: Vec<f64>, t0: f64) -> Result<Self> {
        if !(t0.is_finite() && t0 > 0.0) {
            return Err(Error::Validation(format!("t0 must be positive, got {t0}")));
        }
        if let Some(bad) = times.iter().find(|&&r| !(r > 0.0 && r <= t0)) {
            return Err(Error::Validation(format!(
                "appearance time {bad} is outside (0, {t0}]"
            )));
        }
        times.sort_by(f64::total_cmp);
        Ok(Self { times, t0 })
    }

    /// Sorted times.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn n_plus(&self) -> u64 {
        self.times.len() as u64
    }

    /// The empirical SAC `n_+(t)`.
    pub fn sac(&self, t: f64) -> u64 {
        self.times.partition_point(|&r| r <= t) as u64
    }

    pub fn binned(&self, breakpoints: Vec<f64>) -> Result<BinnedSac> {
        BinnedSac::from_times(&self.times, breakpoints)
    }
}

/// `ψ̂(t) = n_+ (t/t0)^z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSacFit {
    pub psi_t0: f64,
    pub z: f64,
    pub t0: f64,
}

impl PowerSacFit {
    pub fn psi(&self, t: f64) -> f64 {
        self.psi_t0 * (t / self.t0).powf(self.z)
    }
}

/// Closed-form power-law MLE, `z = min(n_+ / Σ log(t0/r_i), 1)`. A zero
/// denominator (every time equal to `t0`) is clamped to `z = 1`.
pub fn mle_power_sac(sample: &FirstAppearanceSample) -> Result<PowerSacFit> {
    let n = sample.n_plus();
    if n == 0 {
        return Err(Error::InsufficientData("no appearance times".into()));
    }
    let t0 = sample.t0();
    let s: f64 = sample.times.iter().map(|&r| (t0 / r).ln()).sum();
    let z = if s > 0.0 {
        (n as f64 / s).min(1.0)
    } else {
        1.0
    };
    Ok(PowerSacFit {
        psi_t0: n as f64,
        z,
        t0,
    })
}

/// `Σ log ψ'(r_i) - ψ(t0)`, the ρ = 1 likelihood.
pub fn loglik_first_appearance(model: &Model, sample: &FirstAppearanceSample) -> Result<f64> {
    model.validate()?;
    let mut total = 0.0;
    for &r in &sample.times {
        total += model.log_abs_psi_deriv(1, r)?;
    }
    let total = if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    };
    Ok(total - model.psi(sample.t0())?)
}

/// Conditional on `n_+(t0)`:
/// `Σ Δn_i log(ψ(ℓ_i) - ψ(ℓ_{i-1})) - n_+(t0) log ψ(t0)`.
///
/// Bins without new species contribute nothing, so adjacent empty bins can
/// be merged; a bin with new species but no increase of `ψ` gives `-∞`.
pub fn loglik_sac_binned(model: &Model, binned: &BinnedSac) -> Result<f64> {
    let psi = binned
        .breakpoints()
        .iter()
        .map(|&l| model.psi(l))
        .collect::<Result<Vec<_>>>()?;
    let n = binned.n_plus() as f64;
    let mut ll = -n * psi.last().expect("nonempty").ln();
    let (mut prev_psi, mut prev_n) = (0.0, 0);
    for (&p, &c) in psi.iter().zip(binned.cumulative()) {
        let dn = c - prev_n;
        if dn > 0 {
            let inc = p - prev_psi;
            if !(inc > 0.0) {
                return Ok(f64::NEG_INFINITY);
            }
            ll += dn as f64 * inc.ln();
        }
        prev_psi = p;
        prev_n = c;
    }
    Ok(ll)
}

/// Full Poisson likelihood: the conditional one plus `-ψ(t0) + n_+ log ψ(t0)`.
pub fn loglik_sac_binned_full(model: &Model, binned: &BinnedSac) -> Result<f64> {
    let psi = model.psi(binned.t0())?;
    let n = binned.n_plus() as f64;
    Ok(loglik_sac_binned(model, binned)? - psi + n * psi.ln())
}

/// ESAC families for SAC-only inference, parametrized by `τ = ψ(t0)` and
/// one shape value (except LDR1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SacFamily {
    /// `ψ(t) ∝ t^{1-1/c}`; shape `c > 1`.
    Power,
    /// `ψ(t) ∝ log(1 + t/b)`; shape `b > 0`.
    Logseries,
    /// Hyperbola `ψ(t) ∝ t/(t + 2b)`; shape `b > 0`.
    Geometric,
    /// General `ξ(t) = b + c t` (two shape parameters, no curve fit).
    Ldr1,
}

impl SacFamily {
    pub fn name(self) -> &'static str {
        match self {
            SacFamily::Power => "power",
            SacFamily::Logseries => "logseries",
            SacFamily::Geometric => "geometric",
            SacFamily::Ldr1 => "ldr1",
        }
    }

    /// Unit-scale LDR1 member (`a = 1`) with the given shape.
    pub fn unit_model(self, shape: f64) -> Result<Model> {
        let p = match self {
            SacFamily::Power => Ldr1Params::power_law(1.0, shape)?,
            SacFamily::Logseries => Ldr1Params::new(1.0, shape, 1.0)?,
            SacFamily::Geometric => Ldr1Params::new(1.0, shape, 0.5)?,
            SacFamily::Ldr1 => {
                return Err(Error::Config("ldr1 has two shape parameters".into()));
            }
        };
        Ok(p.into())
    }

    /// The member with `ψ(t0) = tau`.
    pub fn model(self, tau: f64, shape: f64, t0: f64) -> Result<Model> {
        let unit = self.unit_model(shape)?;
        Ok(unit.scaled(tau / unit.psi(t0)?))
    }

    /// Inverse of `ψ(t)/ψ(t0)` on `[0, t0]`.
    fn inverse_cdf(self, shape: f64, t0: f64, u: f64) -> f64 {
        match self {
            SacFamily::Power => t0 * u.powf(shape / (shape - 1.0)),
            SacFamily::Logseries => shape * (u * (t0 / shape).ln_1p()).exp_m1(),
            SacFamily::Geometric => {
                let g = t0 / (t0 + 2.0 * shape);
                2.0 * shape * u * g / (1.0 - u * g)
            }
            SacFamily::Ldr1 => unreachable!("no closed-form inverse"),
        }
    }

    /// Shape from an unconstrained coordinate, and back.
    fn shape_of(self, x: f64) -> f64 {
        match self {
            // c = 1/(1 - z) with exponent z = 1/(1 + e^{-x})
            SacFamily::Power => 1.0 + x.exp(),
            _ => x.exp(),
        }
    }

    fn coord_of(self, shape: f64) -> f64 {
        match self {
            SacFamily::Power => (shape - 1.0).ln(),
            _ => shape.ln(),
        }
    }
}

impl fmt::Display for SacFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SacFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "power" | "powerlaw" => Ok(SacFamily::Power),
            "logseries" | "log-series" => Ok(SacFamily::Logseries),
            "geometric" | "hyperbola" => Ok(SacFamily::Geometric),
            "ldr1" => Ok(SacFamily::Ldr1),
            _ => Err(Error::Config(format!(
                "unknown SAC family `{s}` (expected power, logseries, geometric or ldr1)"
            ))),
        }
    }
}

/// Binned-SAC maximum likelihood fit. The conditional likelihood does not
/// involve the scale, which is set to its full-likelihood MLE `n_+(t0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SacFit {
    pub family: SacFamily,
    pub model: Model,
    /// Conditional log-likelihood at the optimum.
    pub loglik: f64,
    pub converged: bool,
}

impl SacFit {
    pub fn psi(&self, t: f64) -> Result<f64> {
        self.model.psi(t)
    }
}

pub fn mle_sac_binned(binned: &BinnedSac, family: SacFamily) -> Result<SacFit> {
    let n = binned.n_plus();
    if n == 0 {
        return Err(Error::InsufficientData(
            "no species in the binned SAC".into(),
        ));
    }
    let t0 = binned.t0();
    let unit = |x: &[f64]| -> Result<Model> {
        match family {
            SacFamily::Ldr1 => Ok(Ldr1Params::new(1.0, x[0].exp(), x[1].exp())?.into()),
            f => f.unit_model(f.shape_of(x[0])),
        }
    };
    let objective = |x: &[f64]| match unit(x).and_then(|m| loglik_sac_binned(&m, binned)) {
        Ok(ll) => -ll,
        Err(_) => f64::INFINITY,
    };
    let starts: Vec<Vec<f64>> = match family {
        SacFamily::Ldr1 => vec![vec![(0.1 * t0).ln(), 0.0], vec![t0.ln(), (0.5f64).ln()]],
        SacFamily::Power => [1.5, 3.0]
            .iter()
            .map(|&c| vec![family.coord_of(c)])
            .collect(),
        _ => [0.02, 0.2, 2.0]
            .iter()
            .map(|&b| vec![family.coord_of(b * t0)])
            .collect(),
    };
    let opts = Options {
        step: 1.0,
        ..Options::default()
    };
    let best = starts
        .iter()
        .map(|s| optim::minimize(objective, s, &opts))
        .min_by(|a, b| a.fx.total_cmp(&b.fx))
        .expect("at least one start");
    if !best.fx.is_finite() {
        return Err(Error::Numeric(format!(
            "no finite {} likelihood found",
            family.name()
        )));
    }
    let unit_model = unit(&best.x)?;
    let model = unit_model.scaled(n as f64 / unit_model.psi(t0)?);
    Ok(SacFit {
        family,
        model,
        loglik: -best.fx,
        converged: best.converged,
    })
}

/// Least-squares fit of a linearized SAC.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub family: SacFamily,
    pub intercept: f64,
    pub slope: f64,
    /// Fitted `ψ(t0)`.
    pub tau: f64,
    /// Back-transformed shape: `c` (power) or `b` (log-series, geometric);
    /// NaN when the fitted line has no counterpart in the family.
    pub shape: f64,
    /// Breakpoints left out because the transform is undefined there.
    pub dropped: usize,
    pub t0: f64,
}

impl CurveFit {
    /// The fitted curve at `t`.
    pub fn psi(&self, t: f64) -> f64 {
        let (a, b) = (self.intercept, self.slope);
        match self.family {
            SacFamily::Power => (a + b * t.ln()).exp(),
            SacFamily::Logseries => a + b * t.ln(),
            SacFamily::Geometric => 1.0 / (a + b / t),
            SacFamily::Ldr1 => unreachable!("no curve fit for ldr1"),
        }
    }
}

/// Ordinary least squares on the linearized curve: `log n` on `log t`
/// (power), `n` on `log t` (log-series) or `1/n` on `1/t` (geometric).
pub fn curvefit_baseline(binned: &BinnedSac, family: SacFamily) -> Result<CurveFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0;
    for (&t, &n) in binned.breakpoints().iter().zip(binned.cumulative()) {
        let n = n as f64;
        let point = match family {
            SacFamily::Power => (n > 0.0).then(|| (t.ln(), n.ln())),
            SacFamily::Logseries => Some((t.ln(), n)),
            SacFamily::Geometric => (n > 0.0).then(|| (1.0 / t, 1.0 / n)),
            SacFamily::Ldr1 => {
                return Err(Error::Config("no curve-fitting baseline for ldr1".into()))
            }
        };
        match point {
            Some((x, y)) => {
                xs.push(x);
                ys.push(y);
            }
            None => dropped += 1,
        }
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "the {} transform leaves {} usable points; need 2",
            family.name(),
            xs.len()
        )));
    }
    let (intercept, slope, _) = least_squares(&xs, &ys)
        .ok_or_else(|| Error::Numeric("degenerate regression design".into()))?;
    let t0 = binned.t0();
    let mut fit = CurveFit {
        family,
        intercept,
        slope,
        tau: 0.0,
        shape: f64::NAN,
        dropped,
        t0,
    };
    fit.tau = fit.psi(t0);
    fit.shape = match family {
        SacFamily::Power if slope < 1.0 => 1.0 / (1.0 - slope),
        SacFamily::Logseries if slope > 0.0 => t0 * (-fit.tau / slope).exp(),
        SacFamily::Geometric if intercept > 0.0 => slope / (2.0 * intercept),
        _ => f64::NAN,
    };
    Ok(fit)
}

/// Dvoretzky–Kiefer–Wolfowitz band for `ψ(t)/ψ(t0)`, scaled by `n_+`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DkwBand {
    pub alpha: f64,
    pub epsilon: f64,
    pub n_plus: u64,
    pub t0: f64,
    times: Vec<f64>,
}

/// `ε = sqrt(log(2/α) / (2n))`.
pub fn dkw_epsilon(n: u64, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

pub fn dkw_band(sample: &FirstAppearanceSample, alpha: f64) -> Result<DkwBand> {
    if sample.n_plus() == 0 {
        return Err(Error::InsufficientData(
            "the DKW band needs at least one time".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(DkwBand {
        alpha,
        epsilon: dkw_epsilon(sample.n_plus(), alpha),
        n_plus: sample.n_plus(),
        t0: sample.t0(),
        times: sample.times.clone(),
    })
}

impl DkwBand {
    /// Empirical distribution function and its band at `t`.
    pub fn cdf_band(&self, t: f64) -> (f64, f64, f64) {
        let f = self.times.partition_point(|&r| r <= t) as f64 / self.n_plus as f64;
        (f, (f - self.epsilon).max(0.0), (f + self.epsilon).min(1.0))
    }

    /// The band on the SAC scale, `n_+ ×` [`cdf_band`](Self::cdf_band).
    pub fn sac_band(&self, t: f64) -> (f64, f64, f64) {
        let n = self.n_plus as f64;
        let (f, lo, hi) = self.cdf_band(t);
        (n * f, n * lo, n * hi)
    }

    /// `t,sac,lower,upper` at every jump and at `t0`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,sac,lower,upper\n");
        let mut ts: Vec<f64> = std::iter::once(0.0)
            .chain(self.times.iter().copied())
            .collect();
        ts.push(self.t0);
        ts.dedup();
        for t in ts {
            let (s, lo, hi) = self.sac_band(t);
            let _ = writeln!(out, "{t:?},{s:?},{lo:?},{hi:?}");
        }
        out
    }
}

/// Sizes of the extrapolation experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentTable {
    /// Power law, `c ∈ {1.25, 1.5, 2, 3, 4, 5}`.
    B,
    /// Log-series, `b ∈ {0.01, 0.02, 0.03, 0.05, 0.1, 0.2}`.
    C,
    /// Geometric, `b ∈ {0.05, 0.1, 0.2, 0.4, 0.6, 0.8}`.
    D,
}

impl ExperimentTable {
    pub fn family(self) -> SacFamily {
        match self {
            ExperimentTable::B => SacFamily::Power,
            ExperimentTable::C => SacFamily::Logseries,
            ExperimentTable::D => SacFamily::Geometric,
        }
    }

    pub fn shapes(self) -> [f64; 6] {
        match self {
            ExperimentTable::B => [1.25, 1.5, 2.0, 3.0, 4.0, 5.0],
            ExperimentTable::C => [0.01, 0.02, 0.03, 0.05, 0.1, 0.2],
            ExperimentTable::D => [0.05, 0.1, 0.2, 0.4, 0.6, 0.8],
        }
    }
}

impl FromStr for ExperimentTable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "B" => Ok(ExperimentTable::B),
            "C" => Ok(ExperimentTable::C),
            "D" => Ok(ExperimentTable::D),
            _ => Err(Error::Config(format!(
                "unknown table `{s}` (expected B, C or D)"
            ))),
        }
    }
}

/// One setting of the extrapolation experiment on `[0, 1]` with ten
/// equally spaced breakpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetting {
    pub family: SacFamily,
    pub shape: f64,
    pub tau: f64,
    pub replicates: usize,
}

/// Root mean squared relative errors of `ψ̂(t)` for each target time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub setting: ExperimentSetting,
    pub targets: Vec<f64>,
    pub rmsre_mle: Vec<f64>,
    pub rmsre_curvefit: Vec<f64>,
    /// Replicates where either method failed; they are left out of both.
    pub failures: usize,
}

/// Simulates first appearance times with `ψ(1) = τ`, bins them at
/// `0.1, …, 1`, and compares binned MLE and curve-fit extrapolations on the
/// same data.
pub fn extrapolation_experiment(
    setting: &ExperimentSetting,
    targets: &[f64],
    seed: u64,
) -> Result<ExperimentResult> {
    let family = setting.family;
    if family == SacFamily::Ldr1 {
        return Err(Error::Config(
            "the experiment covers power, logseries and geometric".into(),
        ));
    }
    let t0 = 1.0;
    let truth_model = family.model(setting.tau, setting.shape, t0)?;
    let truth = targets
        .iter()
        .map(|&t| truth_model.psi(t))
        .collect::<Result<Vec<_>>>()?;
    let breaks: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let per_rep: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..setting.replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(seed, i as u64);
            let n = Poisson::new(setting.tau)
                .expect("positive tau")
                .sample(&mut rng) as usize;
            let times: Vec<f64> = (0..n)
                .map(|_| {
                    family
                        .inverse_cdf(setting.shape, t0, rng.random())
                        .max(f64::MIN_POSITIVE)
                })
                .collect();
            let binned = BinnedSac::from_times(&times, breaks.clone()).ok()?;
            let mle = mle_sac_binned(&binned, family).ok()?;
            let cf = curvefit_baseline(&binned, family).ok()?;
            let rel = |est: f64, tr: f64| ((est - tr) / tr).powi(2);
            let m = targets
                .iter()
                .zip(&truth)
                .map(|(&t, &tr)| mle.psi(t).map(|e| rel(e, tr)))
                .collect::<Result<Vec<_>>>()
                .ok()?;
            let c = targets
                .iter()
                .zip(&truth)
                .map(|(&t, &tr)| rel(cf.psi(t), tr))
                .collect();
            Some((m, c))
        })
        .collect();
    let ok: Vec<&(Vec<f64>, Vec<f64>)> = per_rep
        .iter()
        .flatten()
        .filter(|(m, c)| m.iter().chain(c).all(|v| v.is_finite()))
        .collect();
    if ok.is_empty() {
        return Err(Error::Numeric("every replicate failed".into()));
    }
    let rmsre = |curvefit: bool| -> Vec<f64> {
        (0..targets.len())
            .map(|j| {
                let sum: f64 = ok.iter().map(|r| if curvefit { r.1[j] } else { r.0[j] }).sum();
                (sum / ok.len() as f64).sqrt()
            })
            .collect()
    };
    Ok(ExperimentResult {
        setting: *setting,
        targets: targets.to_vec(),
        rmsre_mle: rmsre(false),
        rmsre_curvefit: rmsre(true),
        failures: setting.replicates - ok.len(),
    })
}

/// The full grid of one table: `τ ∈ {200, 1000}`, `t ∈ {2, 4}` and the six
/// shapes, as CSV rows `table,family,shape,tau,t,method,rmsre,replicates,failures`.
pub fn experiment_table_csv(
    table: ExperimentTable,
    replicates: usize,
    seed: u64,
) -> Result<String> {
    let mut out = String::from("table,family,shape,tau,t,method,rmsre,replicates,failures\n");
    let targets = [2.0, 4.0];
    for (it, &tau) in [200.0, 1000.0].iter().enumerate() {
        for (is, &shape) in table.shapes().iter().enumerate() {
            let setting = ExperimentSetting {
                family: table.family(),
                shape,
                tau,
                replicates,
            };
            let sub =
                seed.wrapping_add(((it * 16 + is) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let r = extrapolation_experiment(&setting, &targets, sub)?;
            for (j, &t) in targets.iter().enumerate() {
                for (method, v) in [("curvefit", r.rmsre_curvefit[j]), ("mle", r.rmsre_mle[j])] {
                    let _ = writeln!(
                        out,
                        "{table:?},{},{shape},{tau},{t},{method},{v:.6},{replicates},{}",
                        table.family(),
                        r.failures
                    );
                }
            }
        }
    }
    Ok(out)
}
