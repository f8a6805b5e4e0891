//! Parametric bootstrap intervals that tolerate infinite estimates.
//!
//! Replicates are sorted with the sentinels `θ_(0) = 0` and `θ_(B+1) = +∞`,
//! and the interval is the narrowest of `[θ_(j), θ_((B+1)(1-α)+j)]` for
//! `0 ≤ j ≤ (B+1)α`. No arithmetic is done on the estimates themselves, so
//! `+∞` is an ordinary value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FrequencyOfFrequencies;
use crate::error::{Error, Result};
use crate::ext::ExtendedNonnegReal;
use crate::fit::{self, FitOptions, FitResult};
use crate::hill;
use crate::nonparam;
use crate::richness::{self, Method};
use crate::rng::{self, Rng};
use crate::simulate::FofSampler;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(b: usize, alpha: f64, seed: u64) -> Result<Self> {
        let c = Self { b, alpha, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            b: 2999,
            alpha: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.b < 19 {
            return Err(Error::Config(format!(
                "B must be at least 19, got {}",
                self.b
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        let half = self.alpha * (self.b + 1) as f64 / 2.0;
        if (half - half.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "alpha·(B+1)/2 must be an integer, got {half} for B = {} and alpha = {}",
                self.b, self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: ExtendedNonnegReal,
    pub lower: ExtendedNonnegReal,
    pub upper: ExtendedNonnegReal,
}

impl IntervalEstimate {
    /// Shifts all three values by `offset`, e.g. unseen species to total.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            point: self.point + offset,
            lower: self.lower + offset,
            upper: self.upper + offset,
        }
    }
}

/// The narrowest `[θ_(j), θ_((B+1)(1-α)+j)]`.
///
/// Widths are compared in the extended reals with `∞ - ∞ = 0`, so an
/// interval `[∞, ∞]` wins when at least a `1-α` share of replicates is
/// infinite. Among infinite widths the one with the largest lower end is
/// the smallest set; other ties go to the smallest `j`.
///
/// Only `(B+1)α` has to be an integer here; [`BootstrapConfig`] asks for
/// the stronger `(B+1)α/2`.
pub fn smallest_interval(
    replicates: &[ExtendedNonnegReal],
    alpha: f64,
) -> Result<(ExtendedNonnegReal, ExtendedNonnegReal)> {
    let b = replicates.len();
    let tail = alpha * (b + 1) as f64;
    if !(alpha > 0.0 && alpha < 1.0) || (tail - tail.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "(B+1)·alpha must be an integer, got {tail}"
        )));
    }
    let mut sorted = Vec::with_capacity(b + 2);
    sorted.push(ExtendedNonnegReal::ZERO);
    sorted.extend_from_slice(replicates);
    sorted[1..].sort();
    sorted.push(ExtendedNonnegReal::INFINITY);
    let m = tail.round() as usize;
    let span = b + 1 - m;
    let width = |lo: ExtendedNonnegReal, hi: ExtendedNonnegReal| {
        if lo.is_infinite() {
            0.0
        } else {
            hi.value() - lo.value()
        }
    };
    let mut best = 0;
    for j in 1..=m {
        let (w, wb) = (
            width(sorted[j], sorted[j + span]),
            width(sorted[best], sorted[best + span]),
        );
        if w < wb || (w.is_infinite() && wb.is_infinite() && sorted[j] > sorted[best]) {
            best = j;
        }
    }
    Ok((sorted[best], sorted[best + span]))
}

/// Evaluates `estimator` on `B` samples from `generator`. Replicate `i`
/// uses RNG stream `i` of the seed; estimator failures count as `+∞`.
pub fn replicates<S, G, E>(
    generator: G,
    estimator: E,
    config: &BootstrapConfig,
) -> Vec<ExtendedNonnegReal>
where
    G: Fn(&mut Rng) -> Result<S> + Sync,
    E: Fn(&S) -> Result<ExtendedNonnegReal> + Sync,
{
    (0..config.b)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(config.seed, i as u64);
            generator(&mut rng)
                .and_then(|s| estimator(&s))
                .unwrap_or(ExtendedNonnegReal::INFINITY)
        })
        .collect()
}

pub fn bootstrap_ci<S, G, E>(
    point: ExtendedNonnegReal,
    generator: G,
    estimator: E,
    config: &BootstrapConfig,
) -> Result<IntervalEstimate>
where
    G: Fn(&mut Rng) -> Result<S> + Sync,
    E: Fn(&S) -> Result<ExtendedNonnegReal> + Sync,
{
    config.validate()?;
    let reps = replicates(generator, estimator, config);
    let (lower, upper) = smallest_interval(&reps, config.alpha)?;
    Ok(IntervalEstimate {
        point,
        lower,
        upper,
    })
}

/// One FoF from the fitted model: `N_+ ~ Poisson(Ê N_+(t0))`, then a
/// multinomial draw from the fitted SAD.
pub fn model_fof_sampler(fit: &FitResult, t0: f64, seed: u64) -> Result<FrequencyOfFrequencies> {
    Ok(FofSampler::new(&fit.params, t0)?.sample(&mut rng::substream(seed, 0)))
}

/// Refit from the original estimate only, to bound the cost per replicate.
fn refit_options(fit: &FitResult) -> FitOptions {
    FitOptions {
        starts: 1,
        initial: Some(fit.params),
        parallel: false,
        ..FitOptions::default()
    }
}

/// Intervals for Hill numbers of each order in `qs`. Every replicate
/// refits the model to a FoF simulated from `fit`.
pub fn hill_intervals(
    fit: &FitResult,
    t0: f64,
    qs: &[f64],
    config: &BootstrapConfig,
) -> Result<Vec<IntervalEstimate>> {
    config.validate()?;
    let sampler = FofSampler::new(&fit.params, t0)?;
    let opts = refit_options(fit);
    let family = fit.family();
    let reps: Vec<Vec<ExtendedNonnegReal>> = (0..config.b)
        .into_par_iter()
        .map(|i| {
            let fof = sampler.sample(&mut rng::substream(config.seed, i as u64));
            match fit::mle_with(&fof, family, &opts) {
                Ok(f) => qs
                    .iter()
                    .map(|&q| hill::hill(&f.params, q).unwrap_or(ExtendedNonnegReal::INFINITY))
                    .collect(),
                Err(_) => vec![ExtendedNonnegReal::INFINITY; qs.len()],
            }
        })
        .collect();
    qs.iter()
        .enumerate()
        .map(|(iq, &q)| {
            let column: Vec<ExtendedNonnegReal> = reps.iter().map(|r| r[iq]).collect();
            let (lower, upper) = smallest_interval(&column, config.alpha)?;
            Ok(IntervalEstimate {
                point: hill::hill(&fit.params, q)?,
                lower,
                upper,
            })
        })
        .collect()
}

/// Poisson means for resampling `(N_1, N_2, N_3)`, shifted back in time when
/// a rare count is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RareCountsModel {
    pub means: [f64; 3],
    /// The time the means refer to; below `t0` after a shift.
    pub t: f64,
    /// Estimated `ψ(t)`, added to unseen-species intervals.
    pub psi: f64,
    pub shifted: bool,
}

impl RareCountsModel {
    pub fn new(fof: &FrequencyOfFrequencies) -> Result<Self> {
        if fof.is_empty() {
            return Err(Error::InsufficientData(
                "every frequency count is zero".into(),
            ));
        }
        let t0 = fof.t0();
        let rare = [fof.get(1), fof.get(2), fof.get(3)];
        let any_zero = rare.contains(&0);
        let has_higher = fof.iter().any(|(k, n)| k >= 3 && n > 0);
        if any_zero && has_higher {
            let t = t0 - t0 / fof.s_total() as f64;
            let mut means = [0.0; 3];
            for (i, m) in means.iter_mut().enumerate() {
                *m = nonparam::expected_fof_interp(fof, i as u64 + 1, t)?;
            }
            Ok(Self {
                means,
                t,
                psi: nonparam::rarefaction(fof, t)?,
                shifted: true,
            })
        } else {
            Ok(Self {
                means: rare.map(|n| n as f64),
                t: t0,
                psi: fof.n_plus() as f64,
                shifted: false,
            })
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> [u64; 3] {
        use rand_distr::{Distribution, Poisson};
        self.means.map(|m| {
            if m > 0.0 {
                Poisson::new(m).expect("finite mean").sample(rng) as u64
            } else {
                0
            }
        })
    }
}

/// One draw of `(N_1*, N_2*, N_3*)`.
pub fn rare_counts_sampler(fof: &FrequencyOfFrequencies, seed: u64) -> Result<[u64; 3]> {
    Ok(RareCountsModel::new(fof)?.sample(&mut rng::substream(seed, 0)))
}

/// `Ê(N_0)` from rare counts alone.
pub fn unseen_from_rare(counts: [u64; 3], method: Method) -> ExtendedNonnegReal {
    let fof = FrequencyOfFrequencies::new(1.0, [(1, counts[0]), (2, counts[1]), (3, counts[2])])
        .expect("valid frequencies");
    richness::unseen(&fof, method).unseen
}

/// Interval for the expected number of unseen species `E(N_0)`.
pub fn unseen_interval(
    fof: &FrequencyOfFrequencies,
    config: &BootstrapConfig,
) -> Result<IntervalEstimate> {
    let rc = RareCountsModel::new(fof)?;
    let point = richness::unseen(fof, Method::EStar).unseen;
    bootstrap_ci(
        point,
        |rng| Ok(rc.sample(rng)),
        |c| Ok(unseen_from_rare(*c, Method::EStar)),
        config,
    )
}

/// Interval for the richness `E(D)` based on `Ê*(D)`: the unseen interval
/// plus `n_+`, or plus the rarefied `ψ̂(t)` after a backward shift.
pub fn e_star_interval(
    fof: &FrequencyOfFrequencies,
    config: &BootstrapConfig,
) -> Result<IntervalEstimate> {
    let rc = RareCountsModel::new(fof)?;
    let unseen = bootstrap_ci(
        ExtendedNonnegReal::ZERO,
        |rng| Ok(rc.sample(rng)),
        |c| Ok(unseen_from_rare(*c, Method::EStar)),
        config,
    )?;
    let mut out = unseen.shifted(rc.psi);
    out.point = richness::unseen(fof, Method::EStar).total;
    Ok(out)
}
