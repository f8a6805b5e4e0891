use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use serde_json::{Map, Value};

use sadsac::bootstrap::{
    e_star_interval, hill_intervals, unseen_interval, BootstrapConfig, IntervalEstimate,
};
use sadsac::fit::{self, FitOptions, FitResult};
use sadsac::models::{Family, Model};
use sadsac::nonparam::{self, CurveKind};
use sadsac::richness::{self, Method, XiRule};
use sadsac::sac::{self, ExperimentTable, SacFamily};
use sadsac::{datasets, hill, simulate, BinnedSac, FrequencyOfFrequencies, RhoAppearanceData};

use crate::args::{BootArgs, Cli, Command, DataArgs, ModelArgs};
use crate::object;
use crate::output::{emit, num, stdout, to_json, write_file};
use crate::usage;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            data,
            family,
            rho_data,
            starts,
        } => fit_cmd(&data, &family, rho_data.as_deref(), starts),
        Command::Gof { data, model } => gof_cmd(&data, &model),
        Command::Diagnose {
            data,
            plot,
            points,
            z,
            csv,
            svg,
        } => diagnose_cmd(&data, &plot, points, z, csv.as_deref(), svg.as_deref()),
        Command::Richness { data } => richness_cmd(&data),
        Command::Hill { data, model, q } => hill_cmd(&data, &model, &q),
        Command::Bootstrap {
            data,
            target,
            family,
            boot,
        } => bootstrap_cmd(&data, &target, family.as_deref(), &boot),
        Command::Simulate {
            data,
            model,
            seed,
            design,
            replicates,
            realization,
            csv,
        } => simulate_cmd(
            &data,
            &model,
            seed,
            design.as_deref(),
            replicates,
            realization,
            csv.as_deref(),
        ),
        Command::Extrapolate { data, t, family } => extrapolate_cmd(&data, &t, family.as_deref()),
        Command::Sacfit {
            input,
            family,
            method,
            t,
        } => sacfit_cmd(&input, &family, &method, t.as_deref()),
        Command::Sacexp {
            table,
            replicates,
            seed,
            csv,
        } => sacexp_cmd(&table, replicates, seed, csv.as_deref()),
        Command::Dataset { name } => {
            let text = datasets::csv_text(&name).ok_or_else(|| {
                usage(format!(
                    "unknown dataset `{name}` (expected {})",
                    datasets::NAMES.join(", ")
                ))
            })?;
            stdout(text)
        }
    }
}

fn check_t0(t0: Option<f64>) -> Result<()> {
    match t0 {
        Some(t) if !(t.is_finite() && t > 0.0) => {
            Err(usage(format!("--t0 must be a positive number, got {t}")))
        }
        _ => Ok(()),
    }
}

fn has_data(data: &DataArgs) -> bool {
    data.fof.is_some() || data.dataset.is_some()
}

fn load_fof(data: &DataArgs) -> Result<FrequencyOfFrequencies> {
    check_t0(data.t0)?;
    let fof = match (&data.fof, &data.dataset) {
        (Some(path), _) => FrequencyOfFrequencies::load(path, data.t0)
            .with_context(|| format!("--fof {}", path.display()))?,
        (None, Some(name)) => {
            datasets::by_name(name).map_err(|e| usage(format!("--dataset: {e}")))?
        }
        (None, None) => return Err(usage("one of --fof or --dataset is required")),
    };
    match data.t0 {
        Some(t0) => Ok(fof.with_t0(t0)?),
        None => Ok(fof),
    }
}

fn source(data: &DataArgs) -> Value {
    match (&data.fof, &data.dataset) {
        (Some(p), _) => p.display().to_string().into(),
        (None, Some(n)) => n.clone().into(),
        _ => Value::Null,
    }
}

fn parse_family(s: &str) -> Result<Family> {
    Family::from_str(s.trim()).map_err(|e| usage(format!("--family: {e}")))
}

fn parse_list(s: &str, flag: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            let tok = tok.trim();
            match tok {
                "inf" | "+inf" | "Inf" | "infinity" => Ok(f64::INFINITY),
                _ => tok
                    .parse::<f64>()
                    .map_err(|_| usage(format!("{flag}: `{tok}` is not a number"))),
            }
        })
        .collect()
}

fn parse_params(raw: &str) -> Result<Model> {
    let text = if raw.trim_start().starts_with('{') {
        raw.to_string()
    } else {
        std::fs::read_to_string(raw)
            .map_err(|e| usage(format!("--params: cannot read {raw}: {e}")))?
    };
    let model: Model = serde_json::from_str(&text).map_err(|e| usage(format!("--params: {e}")))?;
    model
        .validate()
        .map_err(|e| usage(format!("--params: {e}")))?;
    Ok(model)
}

/// The model named by `--params`, or the MLE of `--family` on the data.
fn resolve_model(
    model: &ModelArgs,
    fof: Option<&FrequencyOfFrequencies>,
) -> Result<(Model, Option<FitResult>)> {
    match (&model.params, &model.family) {
        (Some(_), Some(_)) => Err(usage("--params and --family are mutually exclusive")),
        (Some(raw), None) => Ok((parse_params(raw)?, None)),
        (None, Some(f)) => {
            let family = parse_family(f)?;
            let fof = fof.ok_or_else(|| usage("--family needs data: pass --fof or --dataset"))?;
            let res = fit::mle(fof, family)?;
            Ok((res.params, Some(res)))
        }
        (None, None) => Err(usage("one of --family or --params is required")),
    }
}

fn fit_json(res: &FitResult) -> Result<Value> {
    let mut v = to_json(res)?;
    if let Value::Object(map) = &mut v {
        map.insert(
            "expected_richness".into(),
            to_json(&res.params.expected_richness()?)?,
        );
    }
    Ok(v)
}

fn fit_cmd(
    data: &DataArgs,
    families: &str,
    rho_data: Option<&Path>,
    starts: Option<usize>,
) -> Result<()> {
    let families: Vec<Family> = families
        .split(',')
        .map(parse_family)
        .collect::<Result<_>>()?;
    let mut opts = FitOptions::default();
    if let Some(s) = starts {
        if s == 0 {
            return Err(usage("--starts must be at least 1"));
        }
        opts.starts = s;
    }
    check_t0(data.t0)?;
    let rho = match rho_data {
        Some(p) => Some(
            RhoAppearanceData::load(p, data.t0)
                .with_context(|| format!("--rho-data {}", p.display()))?,
        ),
        None => None,
    };
    let fof = if rho.is_none() {
        Some(load_fof(data)?)
    } else {
        None
    };
    let mut fits = Map::new();
    let mut results = Vec::new();
    for &family in &families {
        let res = match (&rho, &fof) {
            (Some(r), _) => fit::mle_rho_with(r, family, &opts)?,
            (None, Some(f)) => fit::mle_with(f, family, &opts)?,
            _ => unreachable!(),
        };
        eprintln!(
            "{}: loglik {:.4}, AIC {:.4}, {}",
            family.name(),
            res.loglik,
            res.aic,
            if res.converged {
                "converged"
            } else {
                "NOT converged"
            }
        );
        fits.insert(family.name().into(), fit_json(&res)?);
        results.push(res);
    }
    let mut diffs = Map::new();
    for i in 0..results.len() {
        for j in i + 1..results.len() {
            let key = format!("{}-{}", families[i].name(), families[j].name());
            diffs.insert(key, num(results[i].aic - results[j].aic));
        }
    }
    let mut body = object! {
        "source" => if rho.is_some() { rho_data.map(|p| p.display().to_string()).into() } else { source(data) },
        "fits" => Value::Object(fits),
    };
    if let Some(f) = &fof {
        body.insert("n_plus".into(), f.n_plus().into());
        body.insert("t0".into(), num(f.t0()));
    }
    if let Some(r) = &rho {
        body.insert("rho".into(), r.rho().into());
        body.insert("n_plus".into(), r.n_plus().into());
    }
    if !diffs.is_empty() {
        body.insert("aic_difference".into(), Value::Object(diffs));
    }
    emit("fit", body)
}

fn gof_cmd(data: &DataArgs, model: &ModelArgs) -> Result<()> {
    let fof = load_fof(data)?;
    let (m, res) = resolve_model(model, Some(&fof))?;
    let g = fit::pearson_gof_model(&m, &fof)?;
    let cells: Vec<Value> = g
        .pooled_cells
        .iter()
        .map(|c| {
            Value::Object(object! {
                "cells" => c.label(),
                "observed" => num(c.observed),
                "expected" => num(c.expected),
            })
        })
        .collect();
    eprintln!(
        "X² = {:.4}, df = {}, p = {:.4}",
        g.statistic, g.df, g.p_value
    );
    let mut body = object! {
        "source" => source(data),
        "params" => to_json(&m)?,
        "statistic" => num(g.statistic),
        "df" => g.df,
        "p_value" => num(g.p_value),
        "pooled_cells" => cells,
    };
    if let Some(r) = res {
        body.insert("fit".into(), fit_json(&r)?);
    }
    emit("gof", body)
}

fn diagnose_cmd(
    data: &DataArgs,
    plot: &str,
    points: usize,
    z: f64,
    csv: Option<&Path>,
    svg: Option<&Path>,
) -> Result<()> {
    let kind = CurveKind::from_str(plot).map_err(|e| usage(format!("--plot: {e}")))?;
    if points < 2 {
        return Err(usage("--points must be at least 2"));
    }
    if !(z.is_finite() && z > 0.0) {
        return Err(usage("--z must be positive"));
    }
    let fof = load_fof(data)?;
    let grid = nonparam::default_grid(fof.t0(), points);
    let curve = nonparam::diagnostic_curve(&fof, kind, &grid, z)?;
    if let Some(p) = csv {
        write_file(p, &curve.to_csv())?;
    }
    if let Some(p) = svg {
        write_file(p, &curve.to_svg())?;
    }
    let line = curve.line_fit().map(|(intercept, slope, r2)| {
        Value::Object(object! {
            "intercept" => num(intercept),
            "slope" => num(slope),
            "r_squared" => num(r2),
        })
    });
    let pts: Vec<Value> = curve
        .points
        .iter()
        .map(|p| {
            Value::Object(object! {
                "t" => num(p.t),
                "value" => num(p.value),
                "lower" => p.lower.map(num).unwrap_or(Value::Null),
                "upper" => p.upper.map(num).unwrap_or(Value::Null),
            })
        })
        .collect();
    let body = object! {
        "source" => source(data),
        "plot" => kind.name(),
        "grid_points" => grid.len(),
        "points" => pts,
        "skipped" => curve.skipped.iter().copied().map(num).collect::<Vec<_>>(),
        "reference_slope" => curve.reference_slope.map(num).unwrap_or(Value::Null),
        "line_fit" => line.unwrap_or(Value::Null),
        "csv" => csv.map(|p| p.display().to_string()),
        "svg" => svg.map(|p| p.display().to_string()),
    };
    emit("diagnose", body)
}

fn estimate_json(est: &richness::RichnessEstimate) -> Result<Value> {
    Ok(Value::Object(object! {
        "unseen" => to_json(&est.unseen)?,
        "total" => to_json(&est.total)?,
    }))
}

fn richness_cmd(data: &DataArgs) -> Result<()> {
    let fof = load_fof(data)?;
    let opt = |r: sadsac::Result<f64>| r.map(num).unwrap_or(Value::Null);
    let test = match richness::trunc_poisson_test(&fof) {
        Ok(t) => Value::Object(object! {
            "T" => num(t.t),
            "var_T" => num(t.var_t),
            "z" => num(t.z),
            "p" => num(t.p_value),
        }),
        Err(e) => Value::Object(object! { "error" => e.to_string() }),
    };
    let e_star = richness::unseen(&fof, Method::EStar);
    let body = object! {
        "source" => source(data),
        "n_plus" => fof.n_plus(),
        "chao1" => estimate_json(&richness::unseen(&fof, Method::Chao1))?,
        "chao1_corrected" => estimate_json(&richness::unseen(&fof, Method::Chao1Corrected))?,
        "e_star" => estimate_json(&e_star)?,
        "c_star" => opt(richness::c_star(&fof)),
        "c_f" => opt(richness::c_f(&fof)),
        "test" => test,
    };
    eprintln!("E*(D) = {}", e_star.total);
    emit("richness", body)
}

fn hill_cmd(data: &DataArgs, model: &ModelArgs, q: &str) -> Result<()> {
    let qs = parse_list(q, "--q")?;
    let fof = if has_data(data) {
        Some(load_fof(data)?)
    } else {
        None
    };
    let (m, res) = resolve_model(model, fof.as_ref())?;
    let mut values = Map::new();
    for (tok, &qv) in q.split(',').zip(&qs) {
        if !(qv.is_finite() && qv >= 0.0) {
            return Err(usage(format!(
                "--q: orders must be finite and nonnegative, got {tok}"
            )));
        }
        values.insert(tok.trim().to_string(), to_json(&hill::hill(&m, qv)?)?);
    }
    let mut body = object! {
        "params" => to_json(&m)?,
        "hill" => Value::Object(values),
    };
    if let Some(r) = res {
        body.insert("fit".into(), fit_json(&r)?);
        body.insert("source".into(), source(data));
    }
    emit("hill", body)
}

fn interval_json(iv: &IntervalEstimate) -> Result<Value> {
    to_json(iv)
}

fn bootstrap_cmd(
    data: &DataArgs,
    target: &str,
    family: Option<&str>,
    boot: &BootArgs,
) -> Result<()> {
    let cfg = BootstrapConfig::new(boot.b, boot.alpha, boot.seed)
        .map_err(|e| usage(format!("--B/--alpha: {e}")))?;
    let fof = load_fof(data)?;
    let mut intervals = Map::new();
    let target = target.trim();
    match target {
        "e_star" => {
            intervals.insert(
                "e_star".into(),
                interval_json(&e_star_interval(&fof, &cfg)?)?,
            );
        }
        "unseen" => {
            intervals.insert(
                "unseen".into(),
                interval_json(&unseen_interval(&fof, &cfg)?)?,
            );
        }
        t if t.starts_with("hill:") => {
            let list = &t["hill:".len()..];
            let qs = parse_list(list, "--target")?;
            let family = parse_family(
                family.ok_or_else(|| usage("--family is required for hill targets"))?,
            )?;
            let fitted = fit::mle(&fof, family)?;
            let ivs = hill_intervals(&fitted, fof.t0(), &qs, &cfg)?;
            for (tok, iv) in list.split(',').zip(&ivs) {
                intervals.insert(format!("hill:{}", tok.trim()), interval_json(iv)?);
            }
        }
        other => {
            return Err(usage(format!(
                "--target: expected hill:Q, e_star or unseen, got `{other}`"
            )))
        }
    }
    let mut body = object! {
        "source" => source(data),
        "target" => target,
        "B" => cfg.b,
        "alpha" => num(cfg.alpha),
        "seed" => cfg.seed,
    };
    if intervals.len() == 1 {
        if let Some(Value::Object(only)) = intervals.values().next() {
            for (k, v) in only {
                body.insert(k.clone(), v.clone());
            }
        }
    }
    for (k, v) in &intervals {
        eprintln!("{k}: {v}");
    }
    body.insert("intervals".into(), Value::Object(intervals));
    emit("bootstrap", body)
}

fn parse_design(design: &str) -> Result<Vec<u32>> {
    let rest = design
        .trim()
        .strip_prefix("rho=")
        .ok_or_else(|| usage(format!("--design: expected rho=K, got `{design}`")))?;
    rest.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u32>()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| usage(format!("--design: `{tok}` is not a positive integer")))
        })
        .collect()
}

fn emit_csv(
    command: &str,
    csv: Option<&Path>,
    text: &str,
    mut summary: Map<String, Value>,
) -> Result<()> {
    match csv {
        Some(p) => {
            write_file(p, text)?;
            summary.insert("csv".into(), p.display().to_string().into());
            emit(command, summary)
        }
        None => stdout(text),
    }
}

fn simulate_cmd(
    data: &DataArgs,
    model: &ModelArgs,
    seed: u64,
    design: Option<&str>,
    replicates: Option<usize>,
    realization: bool,
    csv: Option<&Path>,
) -> Result<()> {
    let rhos = design.map(parse_design).transpose()?;
    let model_given = model.params.is_some() || model.family.is_some();

    if let Some(reps) = replicates {
        let rhos = rhos.ok_or_else(|| usage("--replicates needs --design rho=K[,K...]"))?;
        if reps < 2 {
            return Err(usage("--replicates must be at least 2"));
        }
        let fof = load_fof(data)?;
        let rows = simulate::rho_design_experiment(&fof, &rhos, reps, seed)?;
        let rows: Vec<Value> = rows
            .iter()
            .map(|r| {
                Value::Object(object! {
                    "rho" => r.rho,
                    "replicates" => r.replicates,
                    "failures" => r.failures,
                    "mean_mu" => num(r.mean_mu),
                    "sd_mu" => num(r.sd_mu),
                    "mean_sigma" => num(r.mean_sigma),
                    "sd_sigma" => num(r.sd_sigma),
                    "mean_gamma" => num(r.mean_gamma),
                    "sd_gamma" => num(r.sd_gamma),
                })
            })
            .collect();
        return emit(
            "simulate",
            object! { "source" => source(data), "seed" => seed, "experiment" => rows },
        );
    }

    if !model_given {
        // thin an observed FoF into ρ-appearance records
        let rhos = rhos.ok_or_else(|| {
            usage("one of --family or --params is required (or --design with data)")
        })?;
        let [rho] = rhos[..] else {
            return Err(usage(
                "--design: a single rho is needed without --replicates",
            ));
        };
        let fof = load_fof(data)?;
        let rd = simulate::sim_rho_from_fof(&fof, rho, seed)?;
        let summary = object! { "source" => source(data), "rho" => rho, "n_plus" => rd.n_plus(), "seed" => seed };
        return emit_csv("simulate", csv, &rd.to_csv(), summary);
    }

    check_t0(data.t0)?;
    let fof = if has_data(data) {
        Some(load_fof(data)?)
    } else {
        None
    };
    let (m, _) = resolve_model(model, fof.as_ref())?;
    let t0 = data
        .t0
        .or(fof.as_ref().map(|f| f.t0()))
        .or(match m {
            Model::Rdr1(p) => Some(p.t0),
            _ => None,
        })
        .unwrap_or(1.0);
    if let Some(rhos) = rhos {
        let [rho] = rhos[..] else {
            return Err(usage(
                "--design: a single rho is needed without --replicates",
            ));
        };
        let rd = simulate::sim_mppp_window(&m, t0, seed)?.rho_data(rho)?;
        let summary = object! { "params" => to_json(&m)?, "rho" => rho, "n_plus" => rd.n_plus(), "seed" => seed, "t0" => num(t0) };
        return emit_csv("simulate", csv, &rd.to_csv(), summary);
    }
    if realization {
        let r = simulate::sim_mppp_window(&m, t0, seed)?;
        let body = object! {
            "params" => to_json(&m)?,
            "seed" => seed,
            "t0" => num(t0),
            "n_plus" => r.n_plus(),
            "realization" => to_json(&r)?,
        };
        return emit("simulate", body);
    }
    let sim = simulate::sim_fof(&m, t0, seed)?;
    let summary = object! { "params" => to_json(&m)?, "n_plus" => sim.n_plus(), "seed" => seed, "t0" => num(t0) };
    emit_csv("simulate", csv, &sim.to_csv(), summary)
}

fn extrapolate_cmd(data: &DataArgs, t: &str, family: Option<&str>) -> Result<()> {
    let ts = parse_list(t, "--t")?;
    let fof = load_fof(data)?;
    let t0 = fof.t0();
    let model = match family {
        Some(f) => Some(fit::mle(&fof, parse_family(f)?)?.params),
        None => None,
    };
    let mut rows = Vec::new();
    for &tv in &ts {
        if !(tv >= 0.0) {
            return Err(usage(format!("--t: times must be nonnegative, got {tv}")));
        }
        let mut row = object! { "t" => num(tv) };
        if tv <= t0 {
            row.insert("rarefaction".into(), num(nonparam::rarefaction(&fof, tv)?));
        }
        if tv >= t0 && tv < 2.0 * t0 {
            row.insert(
                "good_toulmin".into(),
                num(nonparam::good_toulmin(&fof, tv)?),
            );
        }
        if tv >= t0 {
            row.insert(
                "zeroth_order".into(),
                to_json(&richness::extrapolate_psi(&fof, &XiRule::ZerothOrder, tv)?)?,
            );
            row.insert(
                "modified_first_order".into(),
                to_json(&richness::extrapolate_psi(
                    &fof,
                    &XiRule::ModifiedFirstOrder,
                    tv,
                )?)?,
            );
        }
        if let Some(m) = &model {
            let v = if tv.is_infinite() {
                m.expected_richness()?.value()
            } else {
                m.psi(tv)?
            };
            row.insert("model".into(), num(v));
        }
        rows.push(Value::Object(row));
    }
    let mut body = object! { "source" => source(data), "t0" => num(t0), "points" => rows };
    if let Some(m) = model {
        body.insert("params".into(), to_json(&m)?);
    }
    emit("extrapolate", body)
}

fn sacfit_cmd(input: &Path, family: &str, method: &str, t: Option<&str>) -> Result<()> {
    let family = SacFamily::from_str(family).map_err(|e| usage(format!("--family: {e}")))?;
    let binned = BinnedSac::load(input).with_context(|| format!("--input {}", input.display()))?;
    let ts = t
        .map(|s| parse_list(s, "--t"))
        .transpose()?
        .unwrap_or_default();
    let mut curve = Vec::new();
    let mut body = object! {
        "input" => input.display().to_string(),
        "family" => family.name(),
        "method" => method,
        "n_plus" => binned.n_plus(),
    };
    match method {
        "mle" => {
            let f = sac::mle_sac_binned(&binned, family)?;
            body.insert("params".into(), to_json(&f.model)?);
            body.insert("loglik".into(), num(f.loglik));
            body.insert("converged".into(), f.converged.into());
            for &tv in &ts {
                curve.push(Value::Object(
                    object! { "t" => num(tv), "psi" => num(f.psi(tv)?) },
                ));
            }
        }
        "curvefit" => {
            if family == SacFamily::Ldr1 {
                return Err(usage(
                    "--method curvefit supports power, logseries and geometric",
                ));
            }
            let f = sac::curvefit_baseline(&binned, family)?;
            body.insert("intercept".into(), num(f.intercept));
            body.insert("slope".into(), num(f.slope));
            body.insert("tau".into(), num(f.tau));
            body.insert(
                "shape".into(),
                if f.shape.is_nan() {
                    Value::Null
                } else {
                    num(f.shape)
                },
            );
            body.insert("dropped".into(), f.dropped.into());
            for &tv in &ts {
                curve.push(Value::Object(
                    object! { "t" => num(tv), "psi" => num(f.psi(tv)) },
                ));
            }
        }
        other => {
            return Err(usage(format!(
                "--method: expected mle or curvefit, got `{other}`"
            )))
        }
    }
    if !curve.is_empty() {
        body.insert("curve".into(), curve.into());
    }
    emit("sacfit", body)
}

fn sacexp_cmd(table: &str, replicates: usize, seed: u64, csv: Option<&Path>) -> Result<()> {
    let table = ExperimentTable::from_str(table).map_err(|e| usage(format!("--table: {e}")))?;
    if replicates < 2 {
        return Err(usage("--replicates must be at least 2"));
    }
    let text = sac::experiment_table_csv(table, replicates, seed)?;
    let summary =
        object! { "table" => format!("{table:?}"), "replicates" => replicates, "seed" => seed };
    emit_csv("sacexp", csv, &text, summary)
}
