//! Derivative-free minimization (Nelder–Mead with restarts).

/// Settings for [`minimize`].
#[derive(Clone, Copy, Debug)]
pub struct Options {
    /// Edge length of the initial simplex.
    pub step: f64,
    pub max_evals: usize,
    /// Simplex diameter (max-norm) at convergence.
    pub x_tol: f64,
    /// Allowed change of the best value over `window` iterations.
    pub f_tol: f64,
    pub window: usize,
    /// Number of fresh simplices built around the optimum after convergence.
    pub restarts: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            step: 0.5,
            max_evals: 20_000,
            x_tol: 1e-9,
            f_tol: 1e-10,
            window: 20,
            restarts: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub n_evals: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. Non-finite values (including NaN) are treated as
/// `+∞`, which lets callers reject infeasible points.
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: &Options) -> Minimum {
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best = Minimum {
        x: x0.to_vec(),
        fx: eval(x0),
        n_evals: 1,
        converged: false,
    };
    if x0.is_empty() {
        best.converged = true;
        return best;
    }
    for round in 0..=opts.restarts {
        let budget = opts.max_evals.saturating_sub(best.n_evals);
        if budget == 0 {
            break;
        }
        let step = if round == 0 {
            opts.step
        } else {
            opts.step * 0.1
        };
        let run = simplex_run(&eval, &best.x, step, budget, opts);
        let improved = run.fx < best.fx - opts.f_tol;
        let n_evals = best.n_evals + run.n_evals;
        if run.fx <= best.fx {
            best.x = run.x;
            best.fx = run.fx;
        }
        best.n_evals = n_evals;
        best.converged = run.converged;
        if run.converged && !improved && round > 0 {
            break;
        }
    }
    best
}

fn simplex_run(
    f: &impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    budget: usize,
    opts: &Options,
) -> Minimum {
    let n = x0.len();
    let nf = n as f64;
    // dimension-adaptive coefficients
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    while evals < budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        history.push(vals[0]);

        let diameter = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let stalled = history.len() > opts.window && {
            let old = history[history.len() - 1 - opts.window];
            (old - vals[0]).abs() <= opts.f_tol
        };
        let flat = (vals[n] - vals[0]).abs() <= 1e-3 * opts.f_tol;
        if stalled && vals[0].is_finite() && (diameter < opts.x_tol || flat) {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / nf)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            (0..n)
                .map(|j| centroid[j] + coef * (pts[n][j] - centroid[j]))
                .collect()
        };
        let xr = along(-alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < vals[0] {
            let xe = along(-alpha * beta);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(-alpha * gamma);
            let fc = f(&xc);
            (xc, fc)
        } else {
            let xc = along(gamma);
            let fc = f(&xc);
            (xc, fc)
        };
        evals += 1;
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let p: Vec<f64> = (0..n)
                .map(|j| pts[0][j] + delta * (pts[i][j] - pts[0][j]))
                .collect();
            vals[i] = f(&p);
            pts[i] = p;
        }
        evals += n;
    }
    let best = (0..=n)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap_or(0);
    Minimum {
        x: pts[best].clone(),
        fx: vals[best],
        n_evals: evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = minimize(f, &[-1.2, 1.0], &Options::default());
        assert!(m.converged);
        assert!(
            (m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6,
            "{:?}",
            m.x
        );
    }

    #[test]
    fn quadratic_4d_and_infeasible_region() {
        let f = |x: &[f64]| {
            if x[0] < -5.0 {
                return f64::NAN;
            }
            x.iter()
                .enumerate()
                .map(|(i, v)| (i as f64 + 1.0) * (v - i as f64).powi(2))
                .sum()
        };
        let m = minimize(f, &[0.0; 4], &Options::default());
        assert!(m.converged);
        for (i, v) in m.x.iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-6);
        }
    }
}
