//! Likelihoods, maximum likelihood fitting and goodness of fit.
//!
//! Log-likelihoods drop the factorial constants, so for a FoF
//! `loglik = -ψ(t0) + Σ n_k log E(N_k(t0))`. The scale of `ν` is profiled out:
//! at the optimum `ψ(t0) = n_+`, and the shape parameters maximize the
//! multinomial term `Σ n_k log p_k(t0)`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::{FrequencyOfFrequencies, RhoAppearanceData};
use crate::error::{Error, Result};
use crate::models::{Family, Ldr1Params, Ldr2Params, Model, PlnParams, Rdr1Params};
use crate::nonparam;
use crate::optim::{self, Options};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Model,
    pub loglik: f64,
    pub aic: f64,
    pub converged: bool,
    pub n_evals: usize,
    pub start_points: usize,
}

impl FitResult {
    pub fn family(&self) -> Family {
        self.params.family()
    }
}

/// Knobs for [`mle_with`] and [`mle_rho_with`].
#[derive(Clone, Debug)]
pub struct FitOptions {
    pub starts: usize,
    /// Seed of the jittered starting points.
    pub seed: u64,
    /// Extra starting point, e.g. a previous fit.
    pub initial: Option<Model>,
    pub parallel: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0x5eed,
            initial: None,
            parallel: true,
        }
    }
}

/// `log E(N_k(t))` at the listed frequencies.
fn log_expected_at(model: &Model, ks: &[u64], t: f64) -> Result<Vec<f64>> {
    let Some(&kmax) = ks.iter().max() else {
        return Ok(Vec::new());
    };
    match model {
        Model::Pln(_) | Model::Ldr1(_) if kmax > 4 * ks.len() as u64 + 64 => {
            ks.iter().map(|&k| model.log_expected_nk(k, t)).collect()
        }
        _ => {
            let all = model.log_expected_nk_upto(kmax, t)?;
            Ok(ks.iter().map(|&k| all[k as usize - 1]).collect())
        }
    }
}

/// `-ψ(t0) + Σ n_k log E(N_k(t0))`; `-∞` if an observed cell has zero
/// expectation.
pub fn loglik_fof(model: &Model, fof: &FrequencyOfFrequencies) -> Result<f64> {
    model.validate()?;
    if fof.is_empty() {
        return Err(Error::InsufficientData("the FoF has no species".into()));
    }
    let (ks, ns): (Vec<u64>, Vec<u64>) = fof.iter().unzip();
    let le = log_expected_at(model, &ks, fof.t0())?;
    let mut total = -model.psi(fof.t0())?;
    for (l, n) in le.iter().zip(&ns) {
        total += *n as f64 * l;
    }
    Ok(if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    })
}

/// `-ψ(t0) + Σ_{j<ρ} n_j log E(N_j(t0)) + Σ_i log |ψ^{(ρ)}(r_i)|`.
///
/// With `ρ` above every observed frequency this is exactly [`loglik_fof`].
pub fn loglik_rho(model: &Model, data: &RhoAppearanceData) -> Result<f64> {
    model.validate()?;
    let (unit_ll, _) = rho_terms(model, data)?;
    Ok(unit_ll - model.psi(data.t0())?)
}

/// The data-dependent part of [`loglik_rho`] (without `-ψ(t0)`) and the
/// number of recorded species.
fn rho_terms(model: &Model, data: &RhoAppearanceData) -> Result<(f64, u64)> {
    let rho = data.rho() as u64;
    let mut total = 0.0;
    if rho > 1 {
        let le = model.log_expected_nk_upto(rho - 1, data.t0())?;
        for (n, l) in data.low_counts().iter().zip(&le) {
            if *n > 0 {
                total += *n as f64 * l;
            }
        }
    }
    for &r in data.times() {
        total += model.log_abs_psi_deriv(rho, r)?;
    }
    Ok((
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        },
        data.n_plus(),
    ))
}

/// An observation design the profiled likelihood can be evaluated on.
enum Design<'a> {
    Fof {
        fof: &'a FrequencyOfFrequencies,
        ks: Vec<u64>,
        ns: Vec<f64>,
    },
    Rho(&'a RhoAppearanceData),
}

impl Design<'_> {
    fn t0(&self) -> f64 {
        match self {
            Design::Fof { fof, .. } => fof.t0(),
            Design::Rho(d) => d.t0(),
        }
    }

    fn n_plus(&self) -> u64 {
        match self {
            Design::Fof { fof, .. } => fof.n_plus(),
            Design::Rho(d) => d.n_plus(),
        }
    }

    /// Log-likelihood maximized over the scale of `unit`, and that scale.
    fn profiled(&self, unit: &Model) -> Result<(f64, f64)> {
        let n = self.n_plus() as f64;
        let lp = unit.log_psi(self.t0())?;
        let log_scale = n.ln() - lp;
        let data_part = match self {
            Design::Fof { ks, ns, .. } => {
                let le = log_expected_at(unit, ks, self.t0())?;
                le.iter().zip(ns).map(|(l, n)| n * l).sum::<f64>()
            }
            Design::Rho(d) => rho_terms(unit, d)?.0,
        };
        let ll = -n + n * log_scale + data_part;
        Ok((
            if ll.is_nan() { f64::NEG_INFINITY } else { ll },
            log_scale.exp(),
        ))
    }
}

/// Maps unconstrained coordinates to a unit-scale model.
type Param = fn(&[f64], f64) -> Result<Model>;

fn ldr1_interior(x: &[f64], _t0: f64) -> Result<Model> {
    Ok(Ldr1Params::new(1.0, x[0].exp(), x[1].exp())?.into())
}

fn ldr1_boundary(x: &[f64], _t0: f64) -> Result<Model> {
    Ok(Ldr1Params::power_law(1.0, 1.0 + x[0].exp())?.into())
}

fn ldr2(x: &[f64], _t0: f64) -> Result<Model> {
    let inner = Ldr1Params::new(1.0, x[0].exp(), x[1].exp())?;
    Ok(Ldr2Params::new(x[2].exp(), inner)?.into())
}

fn rdr1(x: &[f64], t0: f64) -> Result<Model> {
    let b1 = x[0].exp();
    let b2 = b1 + x[1].exp();
    Ok(Rdr1Params::new(1.0, b1, b2, x[2].exp(), x[3].exp(), t0)?.into())
}

fn pln(x: &[f64], _t0: f64) -> Result<Model> {
    Ok(PlnParams::new(x[0], x[1].exp(), 1.0)?.into())
}

fn coords(model: &Model) -> Vec<f64> {
    match model {
        Model::Ldr1(p) => vec![p.b.max(1e-8).ln(), p.c.clamp(1e-8, 1e6).ln()],
        Model::Ldr2(p) => vec![
            p.inner.b.max(1e-8).ln(),
            p.inner.c.clamp(1e-8, 1e6).ln(),
            (p.zero_rate / p.inner.a).max(1e-8).ln(),
        ],
        Model::Rdr1(p) => vec![
            p.b1.max(1e-8).ln(),
            (p.b2 - p.b1).max(1e-8).ln(),
            p.c1.ln(),
            p.c2.max(1e-8).ln(),
        ],
        Model::Pln(p) => vec![p.mu, p.sigma.ln()],
    }
}

struct Run {
    ll: f64,
    model: Model,
    converged: bool,
    n_evals: usize,
}

fn run_starts(design: &Design, param: Param, starts: &[Vec<f64>], parallel: bool) -> Vec<Run> {
    let t0 = design.t0();
    let objective = |x: &[f64]| match param(x, t0).and_then(|m| design.profiled(&m)) {
        Ok((ll, _)) if ll.is_finite() => -ll,
        _ => f64::INFINITY,
    };
    let opts = Options::default();
    let solve = |x0: &Vec<f64>| {
        let m = optim::minimize(objective, x0, &opts);
        let fitted = param(&m.x, t0)
            .and_then(|unit| design.profiled(&unit).map(|(ll, s)| (ll, unit.scaled(s))));
        match fitted {
            Ok((ll, model)) if ll.is_finite() => Some(Run {
                ll,
                model,
                converged: m.converged,
                n_evals: m.n_evals,
            }),
            _ => None,
        }
    };
    let runs: Vec<Option<Run>> = if parallel {
        starts.par_iter().map(solve).collect()
    } else {
        starts.iter().map(solve).collect()
    };
    runs.into_iter().flatten().collect()
}

/// Best run by log-likelihood, ties to the earliest.
fn merge(runs: Vec<Run>, n_starts: usize) -> Option<FitResult> {
    let n_evals = runs.iter().map(|r| r.n_evals).sum();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.ll > a.ll { b } else { a })?;
    Some(FitResult {
        params: best.model,
        loglik: best.ll,
        aic: 2.0 * best.model.family().total_params() as f64 - 2.0 * best.ll,
        converged: best.converged,
        n_evals,
        start_points: n_starts,
    })
}

fn jitter(base: &[f64], count: usize, seed: u64, sd: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut r = rng::substream(seed, i as u64);
            base.iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    v + sd * z
                })
                .collect()
        })
        .collect()
}

/// Least-squares intercept and slope of the D1/D2 curve, clamped positive.
fn d1d2_start(fof: &FrequencyOfFrequencies) -> (f64, f64) {
    let grid = nonparam::default_grid(fof.t0(), 50);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for t in grid {
        if let Ok(v) = nonparam::hat_xi(fof, t) {
            if v.is_finite() {
                xs.push(t);
                ys.push(v);
            }
        }
    }
    let (b, c) = match nonparam::least_squares(&xs, &ys) {
        Some((b, c, _)) => (b, c),
        None => (0.5, 0.5),
    };
    (b.max(1e-3), c.clamp(1e-2, 50.0))
}

fn fof_design(fof: &FrequencyOfFrequencies) -> Result<Design<'_>> {
    if fof.n_plus() == 0 {
        return Err(Error::InsufficientData("the FoF has no species".into()));
    }
    let (ks, ns): (Vec<u64>, Vec<u64>) = fof.iter().unzip();
    Ok(Design::Fof {
        fof,
        ks,
        ns: ns.into_iter().map(|n| n as f64).collect(),
    })
}

/// Maximum likelihood fit of `family` to a FoF with default options.
pub fn mle(fof: &FrequencyOfFrequencies, family: Family) -> Result<FitResult> {
    mle_with(fof, family, &FitOptions::default())
}

pub fn mle_with(
    fof: &FrequencyOfFrequencies,
    family: Family,
    opts: &FitOptions,
) -> Result<FitResult> {
    let design = fof_design(fof)?;
    let (b0, c0) = d1d2_start(fof);
    let pln_start = || {
        let mean = fof.s_total() as f64 / fof.n_plus() as f64;
        vec![mean.ln() - 0.5, 0.0]
    };
    fit_design(&design, family, opts, (b0, c0), pln_start)
}

/// Maximum likelihood fit to ρ-appearance data.
pub fn mle_rho(data: &RhoAppearanceData, family: Family) -> Result<FitResult> {
    mle_rho_with(data, family, &FitOptions::default())
}

pub fn mle_rho_with(
    data: &RhoAppearanceData,
    family: Family,
    opts: &FitOptions,
) -> Result<FitResult> {
    if data.n_plus() == 0 {
        return Err(Error::InsufficientData("no species recorded".into()));
    }
    let design = Design::Rho(data);
    // The low counts and the spread of appearance times give rough starts.
    let n1 = data.low_counts().first().copied().unwrap_or(0) as f64;
    let c0 = if n1 > 0.0 { 0.7 } else { 0.3 };
    let pln_start = || {
        let rho = data.rho() as f64;
        let median = {
            let mut t: Vec<f64> = data.times().to_vec();
            t.sort_by(f64::total_cmp);
            t.get(t.len() / 2).copied().unwrap_or(data.t0())
        };
        vec![(rho / median).ln() - 0.5, 0.0]
    };
    fit_design(&design, family, opts, (0.5 * data.t0(), c0), pln_start)
}

fn fit_design(
    design: &Design,
    family: Family,
    opts: &FitOptions,
    ldr1_start: (f64, f64),
    pln_start: impl Fn() -> Vec<f64>,
) -> Result<FitResult> {
    let n = opts.starts.max(1);
    let t0 = design.t0();
    let seed_start = |base: Vec<f64>| -> Vec<Vec<f64>> {
        let mut s = vec![base.clone()];
        s.extend(jitter(&base, n - 1, opts.seed, 1.0));
        if let Some(m) = &opts.initial {
            if m.family() == family {
                s.insert(0, coords(m));
            }
        }
        s
    };
    let (b0, c0) = ldr1_start;
    let result = match family {
        Family::Ldr1 => {
            let interior = seed_start(vec![b0.ln(), c0.ln()]);
            let mut runs = run_starts(design, ldr1_interior, &interior, opts.parallel);
            let boundary: Vec<Vec<f64>> = [-2.0, 0.0, 2.0].iter().map(|&w| vec![w]).collect();
            runs.extend(run_starts(design, ldr1_boundary, &boundary, opts.parallel));
            merge(runs, interior.len() + boundary.len())
        }
        Family::Ldr2 => {
            let inner = mle_inner(design, opts, ldr1_start)?;
            let base = coords(&inner.params);
            let mut starts = Vec::new();
            for s in [-4.0, -2.0, 0.0] {
                starts.push(vec![base[0], base[1], s]);
            }
            starts.extend(jitter(
                &[base[0], base[1], -2.0],
                n.saturating_sub(starts.len()),
                opts.seed,
                1.0,
            ));
            if let Some(m @ Model::Ldr2(_)) = &opts.initial {
                starts.insert(0, coords(m));
            }
            let runs = run_starts(design, ldr2, &starts, opts.parallel);
            // LDR2 with no zero-rate species is LDR1; keep whichever is better.
            let boundary = Ldr2Params::new(0.0, ldr1_of(&inner.params))?;
            let mut best = merge(runs, starts.len());
            let boundary_fit = FitResult {
                params: boundary.into(),
                loglik: inner.loglik,
                aic: 2.0 * Family::Ldr2.total_params() as f64 - 2.0 * inner.loglik,
                converged: inner.converged,
                n_evals: inner.n_evals,
                start_points: inner.start_points,
            };
            if best.as_ref().is_none_or(|b| b.loglik < inner.loglik) {
                best = Some(boundary_fit);
            }
            best
        }
        Family::Rdr1 => {
            let inner = mle_inner(design, opts, ldr1_start)?;
            let p = ldr1_of(&inner.params);
            let (c1, b1) = if p.c.is_finite() && p.c > 1e-3 {
                (1.0 / p.c, (p.b / p.c).max(1e-4))
            } else {
                (1.0, p.b.max(1e-4))
            };
            let mut starts = Vec::new();
            for gap in [0.5, 5.0, 50.0, 500.0] {
                for c2 in [0.1, 1.0] {
                    starts.push(vec![
                        b1.ln(),
                        (gap * t0).ln(),
                        c1.min(50.0).ln(),
                        f64::ln(c2),
                    ]);
                }
            }
            starts.truncate(n.max(1));
            if let Some(m @ Model::Rdr1(_)) = &opts.initial {
                starts.insert(0, coords(m));
            }
            merge(
                run_starts(design, rdr1, &starts, opts.parallel),
                starts.len(),
            )
        }
        Family::Pln => {
            let base = pln_start();
            let mut starts = vec![base.clone()];
            for s in [-0.7, 0.7] {
                starts.push(vec![base[0], s]);
            }
            starts.extend(jitter(
                &base,
                n.saturating_sub(starts.len()),
                opts.seed,
                0.7,
            ));
            if let Some(m @ Model::Pln(_)) = &opts.initial {
                starts.insert(0, coords(m));
            }
            merge(
                run_starts(design, pln, &starts, opts.parallel),
                starts.len(),
            )
        }
    };
    result.ok_or_else(|| {
        Error::Numeric(format!(
            "every {} start failed to produce a finite likelihood",
            family.name()
        ))
    })
}

fn mle_inner(design: &Design, opts: &FitOptions, start: (f64, f64)) -> Result<FitResult> {
    let inner_opts = FitOptions {
        initial: None,
        ..opts.clone()
    };
    fit_design(design, Family::Ldr1, &inner_opts, start, Vec::new)
}

fn ldr1_of(m: &Model) -> Ldr1Params {
    match m {
        Model::Ldr1(p) => *p,
        _ => unreachable!("inner fit is LDR1"),
    }
}

/// One cell of the pooled table. `frequencies` lists the `k` it covers;
/// `tail` marks that it also holds the open cell `k > max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub frequencies: Vec<u64>,
    pub tail: bool,
    pub observed: f64,
    pub expected: f64,
}

impl Cell {
    pub fn label(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        let ks = &self.frequencies;
        let mut i = 0;
        while i < ks.len() {
            let mut j = i;
            while j + 1 < ks.len() && ks[j + 1] == ks[j] + 1 {
                j += 1;
            }
            parts.push(if i == j {
                ks[i].to_string()
            } else {
                format!("{}-{}", ks[i], ks[j])
            });
            i = j + 1;
        }
        if self.tail {
            parts.push(">max".into());
        }
        parts.join(",")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub pooled_cells: Vec<Cell>,
}

/// Pearson chi-square test of a fitted model, conditional on `n_+`.
///
/// Expected counts are `n_+ p_k(t0)` for `k = 1..=max` plus an open tail
/// `k > max`. Every cell with expectation below 5 goes into one pooled
/// cell; if that cell is itself below 5 it absorbs the smallest remaining
/// cell. `df = cells - 1 - shape parameters`.
pub fn pearson_gof(fit: &FitResult, fof: &FrequencyOfFrequencies) -> Result<GofResult> {
    pearson_gof_model(&fit.params, fof)
}

pub fn pearson_gof_model(model: &Model, fof: &FrequencyOfFrequencies) -> Result<GofResult> {
    let n = fof.n_plus() as f64;
    if n == 0.0 {
        return Err(Error::InsufficientData("the FoF has no species".into()));
    }
    let kmax = fof.max_k();
    let p = model.sad_upto(kmax, fof.t0())?;
    let tail = (1.0 - p.iter().sum::<f64>()).max(0.0);
    let mut cells = Vec::new();
    let mut small = Cell {
        frequencies: Vec::new(),
        tail: true,
        observed: 0.0,
        expected: n * tail,
    };
    for k in 1..=kmax {
        let e = n * p[k as usize - 1];
        let o = fof.get(k) as f64;
        if e >= 5.0 {
            cells.push(Cell {
                frequencies: vec![k],
                tail: false,
                observed: o,
                expected: e,
            });
        } else {
            small.frequencies.push(k);
            small.observed += o;
            small.expected += e;
        }
    }
    if small.expected >= 5.0 || cells.is_empty() {
        cells.push(small);
    } else if small.expected > 0.0 {
        let idx = (0..cells.len())
            .min_by(|&a, &b| cells[a].expected.total_cmp(&cells[b].expected))
            .expect("nonempty");
        let target = &mut cells[idx];
        target.frequencies.extend(small.frequencies);
        target.frequencies.sort_unstable();
        target.tail = true;
        target.observed += small.observed;
        target.expected += small.expected;
    }
    let shape = model.family().shape_params();
    if cells.len() < shape + 2 {
        return Err(Error::InsufficientData(format!(
            "{} pooled cells leave no degrees of freedom for {} shape parameters",
            cells.len(),
            shape
        )));
    }
    let df = cells.len() - 1 - shape;
    let statistic: f64 = cells
        .iter()
        .map(|c| (c.observed - c.expected).powi(2) / c.expected)
        .sum();
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(GofResult {
        statistic,
        df,
        p_value: chi.sf(statistic),
        pooled_cells: cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use approx::assert_relative_eq;

    #[test]
    fn single_frequency_loglik() {
        let fof = FrequencyOfFrequencies::new(1.0, [(1, 7)]).unwrap();
        let m: Model = Ldr1Params::new(3.0, 0.8, 0.0).unwrap().into();
        let want = -m.psi(1.0).unwrap() + 7.0 * m.psi_deriv(1, 1.0).unwrap().ln();
        assert_relative_eq!(loglik_fof(&m, &fof).unwrap(), want, max_relative = 1e-12);
    }

    #[test]
    fn bird_reference_aic() {
        let m: Model = Ldr1Params::new(14.696, 0.044, 0.772).unwrap().into();
        let ll = loglik_fof(&m, &datasets::bird()).unwrap();
        assert!((6.0 - 2.0 * ll - -25.63).abs() < 0.05, "{}", 6.0 - 2.0 * ll);
    }

    #[test]
    fn profiled_scale_matches_n_plus() {
        let bird = datasets::bird();
        let fit = mle(&bird, Family::Ldr1).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.params.psi(1.0).unwrap(), 72.0, max_relative = 1e-9);
        assert_relative_eq!(
            loglik_fof(&fit.params, &bird).unwrap(),
            fit.loglik,
            max_relative = 1e-10
        );
    }

    #[test]
    fn rho_above_max_is_fof_likelihood() {
        let bird = datasets::bird();
        let rho = bird.max_k() as u32 + 1;
        let low: Vec<u64> = (1..rho as u64).map(|k| bird.get(k)).collect();
        let data = RhoAppearanceData::new(rho, 1.0, low, vec![]).unwrap();
        let m: Model = Ldr1Params::new(14.696, 0.044, 0.772).unwrap().into();
        assert_relative_eq!(
            loglik_rho(&m, &data).unwrap(),
            loglik_fof(&m, &bird).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn perfect_data_has_zero_statistic() {
        let m: Model = Ldr1Params::new(500.0, 0.3, 0.6).unwrap().into();
        let fof = datasets::swine();
        let mut g = pearson_gof_model(&m, &fof).unwrap();
        for c in &mut g.pooled_cells {
            c.observed = c.expected;
        }
        let stat: f64 = g
            .pooled_cells
            .iter()
            .map(|c| (c.observed - c.expected).powi(2) / c.expected)
            .sum();
        assert_eq!(stat, 0.0);
        assert!(g.pooled_cells.iter().all(|c| c.expected >= 5.0));
        assert!(g.pooled_cells.last().unwrap().tail);
        let covered: usize = g.pooled_cells.iter().map(|c| c.frequencies.len()).sum();
        assert_eq!(covered as u64, fof.max_k());
    }
}
