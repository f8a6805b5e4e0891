//! Seeded simulation of mixed Poisson partition processes.
//!
//! Recorded species on `[0, t0]` form a Poisson process with mean `ψ(t0)`.
//! A positive-rate species is drawn through its first appearance time `u`,
//! which has density `ψ'(u)/ψ_+(t0)`; given `u`, the rate has density
//! proportional to `e^{-λu} ν(dλ)`, and the later appearances are a Poisson
//! process on `(u, t0]`. For the gamma-type measures both steps are exact
//! draws, so no envelope is needed even when `ν̃` has infinite mass.
//! Zero-rate species are singletons at uniform times.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Beta, Distribution, Gamma, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::{FrequencyOfFrequencies, RhoAppearanceData};
use crate::error::{Error, Result};
use crate::fit::{self, FitOptions};
use crate::models::{
    log_one_minus_omega0, Family, Intensity, Model, PlnParams, RateMeasure, Rdr1Params,
};
use crate::rng::{self, Rng};

/// One recorded species: its rate and sorted appearance times in `[0, t0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeciesRecord {
    pub rate: f64,
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpppRealization {
    pub species: Vec<SpeciesRecord>,
    pub t0: f64,
    /// `ν({0})` of the simulated intensity.
    pub zero_rate_mass: f64,
}

impl MpppRealization {
    pub fn n_plus(&self) -> u64 {
        self.species.len() as u64
    }

    pub fn fof(&self) -> FrequencyOfFrequencies {
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        for s in &self.species {
            *counts.entry(s.times.len() as u64).or_default() += 1;
        }
        FrequencyOfFrequencies::new(self.t0, counts).expect("positive frequencies")
    }

    /// First appearance times, sorted.
    pub fn first_appearances(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.species.iter().map(|s| s.times[0]).collect();
        r.sort_by(f64::total_cmp);
        r
    }

    /// What the ρ-appearance design would have recorded.
    pub fn rho_data(&self, rho: u32) -> Result<RhoAppearanceData> {
        if rho == 0 {
            return Err(Error::Validation("rho must be at least 1".into()));
        }
        let mut low = vec![0u64; rho as usize - 1];
        let mut times = Vec::new();
        for s in &self.species {
            match s.times.get(rho as usize - 1) {
                Some(&r) => times.push(r.max(f64::MIN_POSITIVE)),
                None => low[s.times.len() - 1] += 1,
            }
        }
        times.sort_by(f64::total_cmp);
        RhoAppearanceData::new(rho, self.t0, low, times)
    }
}

/// Positive-rate part of a recorded-species sampler.
#[derive(Clone, Copy, Debug)]
enum Positive {
    Empty,
    Atom {
        rate: f64,
    },
    /// `ν(dλ) ∝ (m1 ∗ m2)(dλ)`, so `ψ'(u) ∝ (b1+u)^{-c1} (b2+u)^{-c2}`.
    /// `c2 = 0` is a single gamma factor.
    GammaSum {
        b1: f64,
        c1: f64,
        b2: f64,
        c2: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
    },
}

/// Draws recorded species one at a time.
#[derive(Clone, Debug)]
struct SpeciesSampler {
    t0: f64,
    zero_mean: f64,
    /// Recorded positive-rate mass `ψ(t0) - ν({0}) t0`.
    positive_mean: f64,
    /// Mean number of positive-rate draws; exceeds `positive_mean` when
    /// draws are thinned.
    draw_mean: f64,
    positive: Positive,
}

fn poisson(rng: &mut Rng, mean: f64) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean)
            .expect("finite positive mean")
            .sample(rng) as u64
    } else {
        0
    }
}

/// Poisson conditioned to be at least 1.
fn zero_truncated_poisson(rng: &mut Rng, mean: f64) -> u64 {
    if mean >= 1.0 {
        loop {
            let k = poisson(rng, mean);
            if k > 0 {
                return k;
            }
        }
    }
    let mut p = mean * (-mean).exp() / -(-mean).exp_m1();
    let mut u: f64 = rng.random();
    let mut k = 1;
    while u > p && p > 0.0 {
        u -= p;
        k += 1;
        p *= mean / k as f64;
    }
    k
}

fn gamma_draw(rng: &mut Rng, shape: f64, rate: f64) -> f64 {
    if shape <= 0.0 {
        return 0.0;
    }
    Gamma::new(shape, 1.0 / rate)
        .expect("positive shape and rate")
        .sample(rng)
}

/// Inverse CDF of the density `∝ (b+u)^{-c}` on `[0, t0]` at level `p`.
fn inverse_power(b: f64, c: f64, t0: f64, p: f64) -> f64 {
    if b == 0.0 {
        return t0 * p.powf(1.0 / (1.0 - c));
    }
    let e = 1.0 - c;
    let l = (t0 / b).ln_1p();
    if e == 0.0 {
        return b * (p * l).exp_m1();
    }
    // ∫_0^u (1+v/b)^{-c} dv = b·expm1(e·ln1p(u/b))/e
    let total = (e * l).exp_m1();
    let target = p * total;
    (b * (target.ln_1p() / e).exp_m1()).min(t0)
}

impl SpeciesSampler {
    fn from_model(model: &Model, t0: f64) -> Result<Self> {
        model.validate()?;
        let intensity = model.intensity();
        let zero_mean = intensity.zero_rate * t0;
        let positive = match (model, intensity.rates) {
            (_, RateMeasure::Empty) => Positive::Empty,
            (_, RateMeasure::Atom { rate, .. }) => Positive::Atom { rate },
            (_, RateMeasure::Gamma { shape, rate, .. }) => Positive::GammaSum {
                b1: rate,
                c1: shape + 1.0,
                b2: 1.0,
                c2: 0.0,
            },
            (Model::Rdr1(p), _) => Positive::GammaSum {
                b1: p.b1,
                c1: p.c1,
                b2: p.b2,
                c2: p.c2,
            },
            (_, RateMeasure::GammaSum { b1, c1, b2, c2, .. }) => {
                Positive::GammaSum { b1, c1, b2, c2 }
            }
            (_, RateMeasure::Lognormal { mu, sigma, .. }) => Positive::Lognormal { mu, sigma },
        };
        let positive_mean = match positive {
            Positive::Empty => 0.0,
            _ => (model.psi(t0)? - zero_mean).max(0.0),
        };
        let draw_mean = match intensity.rates {
            RateMeasure::Lognormal { mass, .. } => mass,
            _ => positive_mean,
        };
        Ok(Self {
            t0,
            zero_mean,
            positive_mean,
            draw_mean,
            positive,
        })
    }

    fn from_intensity(spec: &Intensity, t0: f64) -> Result<Self> {
        if !(t0.is_finite() && t0 > 0.0) {
            return Err(Error::Validation(format!("t0 must be positive, got {t0}")));
        }
        let bad = |why: String| {
            Err(Error::Validation(format!(
                "intensity violates the integrability condition ∫ min(1, 1/λ) ν(dλ) < ∞: {why}"
            )))
        };
        if !(spec.zero_rate.is_finite() && spec.zero_rate >= 0.0) {
            return bad(format!("zero-rate mass {}", spec.zero_rate));
        }
        let mut draw_mean = None;
        let (positive, positive_mean) = match spec.rates {
            RateMeasure::Empty => (Positive::Empty, 0.0),
            RateMeasure::Atom { rate, mass } => {
                if !(rate.is_finite() && rate > 0.0 && mass.is_finite() && mass >= 0.0) {
                    return bad(format!("atom of mass {mass} at rate {rate}"));
                }
                (Positive::Atom { rate }, -mass * (-rate * t0).exp_m1())
            }
            RateMeasure::Gamma {
                coefficient,
                shape,
                rate,
            } => {
                // ν = K λ^s e^{-βλ}: integrable at 0 iff s > -1, and
                // ∫^∞ λ^{s-1} e^{-βλ} < ∞ iff β > 0 or s < 0
                if !(coefficient.is_finite() && coefficient >= 0.0 && shape > -1.0 && rate >= 0.0) {
                    return bad(format!("gamma measure with shape {shape}, rate {rate}"));
                }
                if rate == 0.0 && shape >= 0.0 {
                    return bad(format!("rate 0 needs negative shape, got {shape}"));
                }
                let c = shape + 1.0;
                // ψ_+(t0) = K Γ(c) ∫_0^t0 (β+u)^{-c} du
                let integral = if rate == 0.0 {
                    t0.powf(1.0 - c) / (1.0 - c)
                } else if c == 1.0 {
                    (t0 / rate).ln_1p()
                } else {
                    rate.powf(1.0 - c) * ((1.0 - c) * (t0 / rate).ln_1p()).exp_m1() / (1.0 - c)
                };
                (
                    Positive::GammaSum {
                        b1: rate,
                        c1: c,
                        b2: 1.0,
                        c2: 0.0,
                    },
                    coefficient * ln_gamma(c).exp() * integral,
                )
            }
            RateMeasure::GammaSum {
                coefficient,
                b1,
                c1,
                b2,
                c2,
            } => {
                let a = coefficient.ln() - c1 * (t0 + b1).ln() - c2 * (t0 + b2).ln();
                let p = Rdr1Params::new(a.exp(), b1, b2, c1, c2, t0).map_err(|e| {
                    Error::Validation(format!(
                        "intensity violates the integrability condition: {e}"
                    ))
                })?;
                (Positive::GammaSum { b1, c1, b2, c2 }, p.psi(t0)?)
            }
            RateMeasure::Lognormal { mass, mu, sigma } => {
                if !(mass.is_finite()
                    && mass >= 0.0
                    && mu.is_finite()
                    && sigma.is_finite()
                    && sigma > 0.0)
                {
                    return bad(format!("lognormal measure with mass {mass}"));
                }
                draw_mean = Some(mass);
                let recorded = mass * log_one_minus_omega0(mu + t0.ln(), sigma)?.exp();
                (Positive::Lognormal { mu, sigma }, recorded)
            }
        };
        if !positive_mean.is_finite() {
            return bad("the recorded-species mass ψ(t0) is infinite".into());
        }
        Ok(Self {
            t0,
            zero_mean: spec.zero_rate * t0,
            positive_mean,
            draw_mean: draw_mean.unwrap_or(positive_mean),
            positive,
        })
    }

    fn uniform_times(&self, rng: &mut Rng, start: f64, count: u64) -> Vec<f64> {
        let mut v: Vec<f64> = (0..count)
            .map(|_| start + (self.t0 - start) * rng.random::<f64>())
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    fn first_time(&self, rng: &mut Rng, b1: f64, c1: f64, b2: f64, c2: f64) -> f64 {
        let t0 = self.t0;
        if c2 == 0.0 {
            // u = 0 would leave the rate unbounded when b1 = 0
            loop {
                let u = inverse_power(b1, c1, t0, rng.random());
                if u > 0.0 || b1 > 0.0 {
                    return u;
                }
            }
        }
        // Propose from the steeper factor, accept with the other one
        // normalized to 1 at u = 0.
        let drop1 = if b1 == 0.0 {
            f64::INFINITY
        } else {
            c1 * (t0 / b1).ln_1p()
        };
        let drop2 = c2 * (t0 / b2).ln_1p();
        let ((bp, cp), (bo, co)) = if drop1 >= drop2 {
            ((b1, c1), (b2, c2))
        } else {
            ((b2, c2), (b1, c1))
        };
        loop {
            let u = inverse_power(bp, cp, t0, rng.random());
            let log_accept = -co * (u / bo).ln_1p();
            if (u > 0.0 || b1 > 0.0) && rng.random::<f64>().ln() <= log_accept {
                return u;
            }
        }
    }

    /// A positive-rate species; `None` when a thinned draw went unrecorded.
    fn positive_species(&self, rng: &mut Rng) -> Option<SpeciesRecord> {
        let t0 = self.t0;
        match self.positive {
            Positive::Empty => None,
            Positive::Atom { rate } => {
                let k = zero_truncated_poisson(rng, rate * t0);
                Some(SpeciesRecord {
                    rate,
                    times: self.uniform_times(rng, 0.0, k),
                })
            }
            Positive::Lognormal { mu, sigma } => {
                let rate = LogNormal::new(mu, sigma)
                    .expect("valid lognormal")
                    .sample(rng);
                let k = poisson(rng, rate * t0);
                (k > 0).then(|| SpeciesRecord {
                    rate,
                    times: self.uniform_times(rng, 0.0, k),
                })
            }
            Positive::GammaSum { b1, c1, b2, c2 } => {
                let u = self.first_time(rng, b1, c1, b2, c2);
                let rate = gamma_draw(rng, c1, b1 + u) + gamma_draw(rng, c2, b2 + u);
                let extra = poisson(rng, rate * (t0 - u));
                let mut times = vec![u];
                times.extend(self.uniform_times(rng, u, extra));
                Some(SpeciesRecord { rate, times })
            }
        }
    }

    /// Frequency of a recorded species drawn from the normalized recorded
    /// intensity, without materializing its appearance times.
    fn recorded_count(&self, rng: &mut Rng) -> u64 {
        let t0 = self.t0;
        let total = self.zero_mean + self.positive_mean;
        loop {
            if rng.random::<f64>() * total < self.zero_mean {
                return 1;
            }
            let k = match self.positive {
                Positive::Empty => continue,
                Positive::Atom { rate } => zero_truncated_poisson(rng, rate * t0),
                Positive::Lognormal { mu, sigma } => {
                    let rate = LogNormal::new(mu, sigma)
                        .expect("valid lognormal")
                        .sample(rng);
                    poisson(rng, rate * t0)
                }
                Positive::GammaSum { b1, c1, b2, c2 } => {
                    let u = self.first_time(rng, b1, c1, b2, c2);
                    let rate = gamma_draw(rng, c1, b1 + u) + gamma_draw(rng, c2, b2 + u);
                    1 + poisson(rng, rate * (t0 - u))
                }
            };
            if k > 0 {
                return k;
            }
        }
    }

    fn realize(&self, rng: &mut Rng, zero_rate_mass: f64) -> MpppRealization {
        let mut species = Vec::new();
        for _ in 0..poisson(rng, self.zero_mean) {
            species.push(SpeciesRecord {
                rate: 0.0,
                times: vec![rng.random::<f64>() * self.t0],
            });
        }
        for _ in 0..poisson(rng, self.draw_mean) {
            if let Some(s) = self.positive_species(rng) {
                species.push(s);
            }
        }
        MpppRealization {
            species,
            t0: self.t0,
            zero_rate_mass,
        }
    }
}

/// Simulates the recorded species of `model` on `[0, t0]`.
pub fn sim_mppp_window(model: &Model, t0: f64, seed: u64) -> Result<MpppRealization> {
    let sampler = SpeciesSampler::from_model(model, t0)?;
    Ok(sampler.realize(&mut rng::substream(seed, 0), model.intensity().zero_rate))
}

/// Simulates from an explicit rate intensity, checking that it defines an
/// MPPP.
pub fn sim_mppp_intensity(spec: &Intensity, t0: f64, seed: u64) -> Result<MpppRealization> {
    let sampler = SpeciesSampler::from_intensity(spec, t0)?;
    Ok(sampler.realize(&mut rng::substream(seed, 0), spec.zero_rate))
}

/// Largest frequency tabulated by [`FofSampler`].
const PMF_CAP: u64 = 4096;
const TAIL_CUTOFF: f64 = 1e-12;

/// Repeated FoF draws from one model: `N_+ ~ Poisson(ψ(t0))`, then iid
/// frequencies by inverse CDF on the tabulated SAD.
#[derive(Clone, Debug)]
pub struct FofSampler {
    t0: f64,
    mean: f64,
    cdf: Vec<f64>,
    /// Used for the mass beyond [`PMF_CAP`] when the SAD tail is too heavy
    /// to tabulate down to the cutoff.
    tail: Option<SpeciesSampler>,
}

impl FofSampler {
    pub fn new(model: &Model, t0: f64) -> Result<Self> {
        model.validate()?;
        let mean = model.psi(t0)?;
        if !mean.is_finite() {
            return Err(Error::Numeric(format!("ψ(t0) = {mean}")));
        }
        let mut kmax = 256;
        let cdf = loop {
            let mut acc = 0.0;
            let cdf: Vec<f64> = model
                .sad_upto(kmax, t0)?
                .into_iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            if acc >= 1.0 - TAIL_CUTOFF || kmax >= PMF_CAP {
                break cdf;
            }
            kmax = (kmax * 4).min(PMF_CAP);
        };
        let complete = cdf.last().is_some_and(|&c| c >= 1.0 - TAIL_CUTOFF);
        let tail = if complete {
            None
        } else {
            Some(SpeciesSampler::from_model(model, t0)?)
        };
        Ok(Self {
            t0,
            mean,
            cdf,
            tail,
        })
    }

    /// Expected number of recorded species.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    fn frequency(&self, rng: &mut Rng) -> u64 {
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c <= u);
        if k < self.cdf.len() {
            return k as u64 + 1;
        }
        match &self.tail {
            None => self.cdf.len() as u64,
            Some(s) => loop {
                let n = s.recorded_count(rng);
                if n > self.cdf.len() as u64 {
                    return n;
                }
            },
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> FrequencyOfFrequencies {
        let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
        for _ in 0..poisson(rng, self.mean) {
            *counts.entry(self.frequency(rng)).or_default() += 1;
        }
        FrequencyOfFrequencies::new(self.t0, counts).expect("positive frequencies")
    }
}

/// One FoF drawn from `model` at `t0`.
pub fn sim_fof(model: &Model, t0: f64, seed: u64) -> Result<FrequencyOfFrequencies> {
    Ok(FofSampler::new(model, t0)?.sample(&mut rng::substream(seed, 0)))
}

/// ρ-appearance data from an observed FoF: a species seen `m ≥ ρ` times
/// gets its ρth appearance at `t0·Beta(ρ, m+1-ρ)`, the ρth order statistic
/// of `m` uniform times.
pub fn sim_rho_from_fof(
    fof: &FrequencyOfFrequencies,
    rho: u32,
    seed: u64,
) -> Result<RhoAppearanceData> {
    rho_from_fof(fof, rho, &mut rng::substream(seed, 0))
}

fn rho_from_fof(
    fof: &FrequencyOfFrequencies,
    rho: u32,
    rng: &mut Rng,
) -> Result<RhoAppearanceData> {
    if rho == 0 {
        return Err(Error::Validation("rho must be at least 1".into()));
    }
    let r = rho as u64;
    let low = (1..r).map(|k| fof.get(k)).collect();
    let mut times = Vec::new();
    for (m, n) in fof.iter().filter(|&(m, _)| m >= r) {
        let beta = Beta::new(rho as f64, (m + 1 - r) as f64).expect("positive shapes");
        for _ in 0..n {
            times.push((beta.sample(rng) * fof.t0()).clamp(f64::MIN_POSITIVE, fof.t0()));
        }
    }
    times.sort_by(f64::total_cmp);
    RhoAppearanceData::new(rho, fof.t0(), low, times)
}

/// Summary of the Poisson–lognormal refits for one ρ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoExperimentRow {
    pub rho: u32,
    pub replicates: usize,
    pub failures: usize,
    pub mean_mu: f64,
    pub sd_mu: f64,
    pub mean_sigma: f64,
    pub sd_sigma: f64,
    pub mean_gamma: f64,
    pub sd_gamma: f64,
    pub fits: Vec<PlnParams>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// Information loss of the ρ-appearance design: `replicates` ρ-data sets are
/// simulated from `fof` for every ρ and refitted with the Poisson–lognormal
/// model.
pub fn rho_design_experiment(
    fof: &FrequencyOfFrequencies,
    rhos: &[u32],
    replicates: usize,
    seed: u64,
) -> Result<Vec<RhoExperimentRow>> {
    let mut rows = Vec::new();
    for &rho in rhos {
        let fits: Vec<Option<PlnParams>> = (0..replicates)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::substream(seed, ((rho as u64) << 32) | i as u64);
                let data = rho_from_fof(fof, rho, &mut rng).ok()?;
                let opts = FitOptions {
                    parallel: false,
                    ..FitOptions::default()
                };
                match fit::mle_rho_with(&data, Family::Pln, &opts).ok()?.params {
                    Model::Pln(p) => Some(p),
                    _ => None,
                }
            })
            .collect();
        let ok: Vec<PlnParams> = fits.iter().flatten().copied().collect();
        if ok.len() < 2 {
            return Err(Error::Numeric(format!(
                "fewer than two successful fits for rho = {rho}"
            )));
        }
        let col = |f: fn(&PlnParams) -> f64| mean_sd(&ok.iter().map(f).collect::<Vec<_>>());
        let (mean_mu, sd_mu) = col(|p| p.mu);
        let (mean_sigma, sd_sigma) = col(|p| p.sigma);
        let (mean_gamma, sd_gamma) = col(|p| p.gamma);
        rows.push(RhoExperimentRow {
            rho,
            replicates,
            failures: replicates - ok.len(),
            mean_mu,
            sd_mu,
            mean_sigma,
            sd_sigma,
            mean_gamma,
            sd_gamma,
            fits: ok,
        });
    }
    Ok(rows)
}
