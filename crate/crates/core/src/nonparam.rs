//! Model-free estimators built from the FoF: unbiased ESAC derivatives,
//! rarefaction and Good–Toulmin extrapolation, binomial interpolation of the
//! FoF, and the diagnostic curves with delta-method bands.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::FrequencyOfFrequencies;
use crate::error::{Error, Result};

fn check_t(fof: &FrequencyOfFrequencies, t: f64) -> Result<()> {
    if t > 0.0 && t <= fof.t0() {
        Ok(())
    } else {
        Err(Error::domain(
            "t",
            format!("must lie in (0, {}], got {t}", fof.t0()),
        ))
    }
}

/// `k (k-1) ⋯ (k-j+1)`.
fn falling(k: u64, j: u64) -> f64 {
    (0..j).map(|i| (k - i) as f64).product()
}

/// Weight of `N_k(t0)` in `ψ̂^{(j)}(t)`.
fn weight(k: u64, j: u64, x: f64, t0: f64) -> f64 {
    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
    sign * falling(k, j) * x.powi((k - j) as i32) / t0.powi(j as i32)
}

/// Unbiased estimator of `ψ^{(j)}(t)` for `0 < t ≤ t0`:
/// `(-1)^{j+1} t0^{-j} Σ_{k≥j} k!/(k-j)! n_k (1 - t/t0)^{k-j}`.
pub fn hat_psi_deriv(fof: &FrequencyOfFrequencies, j: u64, t: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::domain("derivative order j", "must be at least 1"));
    }
    check_t(fof, t)?;
    let x = 1.0 - t / fof.t0();
    Ok(fof
        .iter()
        .filter(|&(k, _)| k >= j)
        .map(|(k, n)| n as f64 * weight(k, j, x, fof.t0()))
        .sum())
}

/// Point estimate and plug-in Poisson variances of `ψ̂^{(j)}` and
/// `ψ̂^{(j+1)}` together with their covariance.
struct Moments {
    d: f64,
    d_next: f64,
    var_d: f64,
    var_next: f64,
    cov: f64,
}

fn moments(fof: &FrequencyOfFrequencies, j: u64, t: f64) -> Moments {
    let x = 1.0 - t / fof.t0();
    let mut m = Moments {
        d: 0.0,
        d_next: 0.0,
        var_d: 0.0,
        var_next: 0.0,
        cov: 0.0,
    };
    for (k, n) in fof.iter() {
        let n = n as f64;
        let w = if k >= j {
            weight(k, j, x, fof.t0())
        } else {
            0.0
        };
        let w1 = if k > j {
            weight(k, j + 1, x, fof.t0())
        } else {
            0.0
        };
        m.d += n * w;
        m.d_next += n * w1;
        m.var_d += n * w * w;
        m.var_next += n * w1 * w1;
        m.cov += n * w * w1;
    }
    m
}

/// The derivative ratio estimate `-ψ̂^{(j)}(t)/ψ̂^{(j+1)}(t)`.
pub fn hat_ratio(fof: &FrequencyOfFrequencies, j: u64, t: f64) -> Result<f64> {
    check_t(fof, t)?;
    let m = moments(fof, j, t);
    if m.d_next == 0.0 {
        return Err(Error::Singular {
            t,
            detail: format!("estimated derivative of order {} vanishes", j + 1),
        });
    }
    Ok(-m.d / m.d_next)
}

/// `ξ̂(t) = -ψ̂'(t)/ψ̂''(t)`; equals `t0 n_1/(2 n_2)` at `t = t0`.
pub fn hat_xi(fof: &FrequencyOfFrequencies, t: f64) -> Result<f64> {
    hat_ratio(fof, 1, t)
}

/// A value with a symmetric pointwise band; the band is `None` when the
/// delta-method variance is unusable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Banded {
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

fn ratio_band(fof: &FrequencyOfFrequencies, j: u64, t: f64, z: f64) -> Result<Banded> {
    check_t(fof, t)?;
    let m = moments(fof, j, t);
    if m.d_next == 0.0 {
        return Err(Error::Singular {
            t,
            detail: format!("estimated derivative of order {} vanishes", j + 1),
        });
    }
    let (a, b) = (m.d, m.d_next);
    let value = -a / b;
    let var = m.var_d / (b * b) + a * a * m.var_next / b.powi(4) - 2.0 * a * m.cov / b.powi(3);
    Ok(band(value, var, z))
}

fn band(value: f64, var: f64, z: f64) -> Banded {
    if var.is_finite() && var >= 0.0 {
        let h = z * var.sqrt();
        Banded {
            value,
            lower: Some(value - h),
            upper: Some(value + h),
        }
    } else {
        Banded {
            value,
            lower: None,
            upper: None,
        }
    }
}

/// `ξ̂(t)` with its delta-method band `± z·sd`.
pub fn d1d2_band(fof: &FrequencyOfFrequencies, t: f64, z: f64) -> Result<Banded> {
    ratio_band(fof, 1, t, z)
}

/// `-ψ̂''(t)/ψ̂'''(t)` with its delta-method band.
pub fn d2d3_band(fof: &FrequencyOfFrequencies, t: f64, z: f64) -> Result<Banded> {
    ratio_band(fof, 2, t, z)
}

/// Rarefaction `Σ n_k (1 - (1 - t/t0)^k)` for `0 ≤ t ≤ t0`.
pub fn rarefaction(fof: &FrequencyOfFrequencies, t: f64) -> Result<f64> {
    if !(0.0..=fof.t0()).contains(&t) {
        return Err(Error::domain(
            "t",
            format!(
                "rarefaction needs 0 <= t <= {}; use good_toulmin beyond t0",
                fof.t0()
            ),
        ));
    }
    let x = 1.0 - t / fof.t0();
    Ok(fof
        .iter()
        .map(|(k, n)| n as f64 * (1.0 - x.powi(k as i32)))
        .sum())
}

/// Good–Toulmin extrapolation `n_+ + Σ (-1)^{k+1} n_k (t/t0 - 1)^k` for
/// `t0 ≤ t < 2 t0`.
pub fn good_toulmin(fof: &FrequencyOfFrequencies, t: f64) -> Result<f64> {
    let t0 = fof.t0();
    if !(t >= t0 && t < 2.0 * t0) {
        return Err(Error::domain(
            "t",
            format!(
                "Good-Toulmin needs {t0} <= t < {}; the series diverges beyond 2·t0",
                2.0 * t0
            ),
        ));
    }
    let u = t / t0 - 1.0;
    let sum: f64 = fof
        .iter()
        .map(|(k, n)| {
            let s = if k % 2 == 1 { 1.0 } else { -1.0 };
            s * n as f64 * u.powi(k as i32)
        })
        .sum();
    Ok(fof.n_plus() as f64 + sum)
}

/// `E(N_j(t) | Ñ(t0))` by binomial thinning, `0 ≤ t ≤ t0`.
pub fn expected_fof_interp(fof: &FrequencyOfFrequencies, j: u64, t: f64) -> Result<f64> {
    let t0 = fof.t0();
    if !(0.0..=t0).contains(&t) {
        return Err(Error::domain(
            "t",
            format!("must lie in [0, {t0}], got {t}"),
        ));
    }
    if j == 0 {
        return Err(Error::domain("frequency j", "must be at least 1"));
    }
    let p = t / t0;
    let x = 1.0 - p;
    let jf: f64 = (1..=j).map(|i| i as f64).product();
    Ok(fof
        .iter()
        .filter(|&(k, _)| k >= j)
        .map(|(k, n)| n as f64 * falling(k, j) / jf * p.powi(j as i32) * x.powi((k - j) as i32))
        .sum())
}

/// Plug-in Good–Turing share `(k+1) n_{k+1} / S(t0)`.
pub fn good_turing_share(fof: &FrequencyOfFrequencies, k: u64) -> Result<f64> {
    let s = fof.s_total();
    if s == 0 {
        return Err(Error::InsufficientData("no individuals recorded".into()));
    }
    Ok((k + 1) as f64 * fof.get(k + 1) as f64 / s as f64)
}

/// The diagnostic plots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    D1d2,
    D2d3,
    CheckPoisson,
    CheckGeometric,
    CheckLogseries,
    CheckPowerlawLogD,
    Loglog,
}

impl CurveKind {
    pub const ALL: [CurveKind; 7] = [
        CurveKind::D1d2,
        CurveKind::D2d3,
        CurveKind::CheckPoisson,
        CurveKind::CheckGeometric,
        CurveKind::CheckLogseries,
        CurveKind::CheckPowerlawLogD,
        CurveKind::Loglog,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CurveKind::D1d2 => "d1d2",
            CurveKind::D2d3 => "d2d3",
            CurveKind::CheckPoisson => "poisson",
            CurveKind::CheckGeometric => "geometric",
            CurveKind::CheckLogseries => "logseries",
            CurveKind::CheckPowerlawLogD => "powerlaw",
            CurveKind::Loglog => "loglog",
        }
    }

    /// Whether the horizontal axis is `log t` rather than `t`.
    pub fn log_x(self) -> bool {
        matches!(self, CurveKind::CheckPowerlawLogD | CurveKind::Loglog)
    }

    fn y_label(self) -> &'static str {
        match self {
            CurveKind::D1d2 => "-D1/D2",
            CurveKind::D2d3 => "-D2/D3",
            CurveKind::CheckPoisson | CurveKind::CheckPowerlawLogD => "log D1",
            CurveKind::CheckGeometric => "D1^(-1/2)",
            CurveKind::CheckLogseries => "1/D1",
            CurveKind::Loglog => "log rarefaction",
        }
    }
}

impl FromStr for CurveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        let alias = match s.as_str() {
            "check_poisson" => "poisson",
            "check_geometric" => "geometric",
            "check_logseries" => "logseries",
            "check_powerlaw_logd" | "logd" => "powerlaw",
            other => other,
        };
        CurveKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| Error::Config(format!("unknown plot `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Sampled diagnostic curve. Points whose transform is undefined are left
/// out and their `t` recorded in `skipped`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticCurve {
    pub name: CurveKind,
    pub points: Vec<CurvePoint>,
    pub skipped: Vec<f64>,
    /// Slope of the reference grid lines to draw (D1/D2 plots use 1).
    pub reference_slope: Option<f64>,
}

/// `n` equally spaced points in `(lo·t0, t0]`.
pub fn default_grid(t0: f64, n: usize) -> Vec<f64> {
    let lo = 0.01 * t0;
    (1..=n)
        .map(|i| lo + (t0 - lo) * i as f64 / n as f64)
        .collect()
}

pub fn diagnostic_curve(
    fof: &FrequencyOfFrequencies,
    name: CurveKind,
    grid: &[f64],
    z: f64,
) -> Result<DiagnosticCurve> {
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Validation("grid must be strictly increasing".into()));
        }
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut skipped = Vec::new();
    for &t in grid {
        check_t(fof, t)?;
        let point = match name {
            CurveKind::D1d2 | CurveKind::D2d3 => {
                let j = if name == CurveKind::D1d2 { 1 } else { 2 };
                match ratio_band(fof, j, t, z) {
                    Ok(b) => Some(from_band(t, b)),
                    Err(Error::Singular { .. }) => None,
                    Err(e) => return Err(e),
                }
            }
            CurveKind::Loglog => {
                let r = rarefaction(fof, t)?;
                (r > 0.0).then(|| CurvePoint {
                    t,
                    value: r.ln(),
                    lower: None,
                    upper: None,
                })
            }
            _ => {
                let m = moments(fof, 1, t);
                let d = m.d;
                if d <= 0.0 {
                    None
                } else {
                    let (value, slope) = match name {
                        CurveKind::CheckPoisson | CurveKind::CheckPowerlawLogD => (d.ln(), 1.0 / d),
                        CurveKind::CheckGeometric => (d.powf(-0.5), -0.5 * d.powf(-1.5)),
                        CurveKind::CheckLogseries => (1.0 / d, -1.0 / (d * d)),
                        _ => unreachable!(),
                    };
                    Some(from_band(t, band(value, slope * slope * m.var_d, z)))
                }
            }
        };
        match point {
            Some(p) if p.value.is_finite() => points.push(p),
            _ => skipped.push(t),
        }
    }
    Ok(DiagnosticCurve {
        name,
        points,
        skipped,
        reference_slope: (name == CurveKind::D1d2).then_some(1.0),
    })
}

fn from_band(t: f64, b: Banded) -> CurvePoint {
    CurvePoint {
        t,
        value: b.value,
        lower: b.lower,
        upper: b.upper,
    }
}

impl DiagnosticCurve {
    /// CSV `t,value,lower,upper` with empty fields for undefined bands.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value,lower,upper\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.t, p.value, opt(p.lower), opt(p.upper));
        }
        out
    }

    /// Ordinary least-squares intercept and slope of `value` on `t` (or on
    /// `log t` for log-x curves).
    pub fn line_fit(&self) -> Option<(f64, f64, f64)> {
        let xs: Vec<f64> = self.points.iter().map(|p| self.x_of(p.t)).collect();
        let ys: Vec<f64> = self.points.iter().map(|p| p.value).collect();
        least_squares(&xs, &ys)
    }

    fn x_of(&self, t: f64) -> f64 {
        if self.name.log_x() {
            t.ln()
        } else {
            t
        }
    }

    /// A standalone SVG line chart: curve, dashed bands and, for D1/D2
    /// plots, dotted slope-1 grid lines.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 420.0;
        const M: f64 = 56.0;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        if self.points.is_empty() {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}">no defined points</text>"#,
                W / 2.0 - 50.0,
                H / 2.0
            );
            out.push_str("</svg>\n");
            return out;
        }
        let xs: Vec<f64> = self.points.iter().map(|p| self.x_of(p.t)).collect();
        let mut ys: Vec<f64> = self.points.iter().map(|p| p.value).collect();
        ys.extend(self.points.iter().filter_map(|p| p.lower));
        ys.extend(self.points.iter().filter_map(|p| p.upper));
        let (x0, x1) = range(&xs);
        let (y0, y1) = range(&ys);
        let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
        let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
        let _ = writeln!(
            out,
            r#"<line x1="{M}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{M}" y1="{M}" x2="{M}" y2="{b}" stroke="black"/>"#,
            b = H - M,
            r = W - M
        );
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(fx),
                H - M + 18.0,
                tick(fx)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                M - 6.0,
                sy(fy) + 4.0,
                tick(fy)
            );
        }
        let xlab = if self.name.log_x() { "log t" } else { "t" };
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{xlab}</text>"#,
            W / 2.0,
            H - 12.0
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            self.name.y_label()
        );
        if let Some(slope) = self.reference_slope {
            let _ = writeln!(
                out,
                r##"<g stroke="#4477aa" stroke-dasharray="2,3" clip-path="url(#plot)">"##
            );
            let _ = writeln!(
                out,
                r#"<clipPath id="plot"><rect x="{M}" y="{M}" width="{}" height="{}"/></clipPath>"#,
                W - 2.0 * M,
                H - 2.0 * M
            );
            // lines y = slope·x + k spaced evenly across the visible range
            let span = (y1 - y0).max(slope * (x1 - x0));
            for i in -6..=6 {
                let k = y0 - slope * x0 + span * i as f64 / 6.0;
                let _ = writeln!(
                    out,
                    r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}"/>"#,
                    sx(x0),
                    sy(slope * x0 + k),
                    sx(x1),
                    sy(slope * x1 + k)
                );
            }
            out.push_str("</g>\n");
        }
        let path = |vals: Vec<(f64, f64)>| -> String {
            vals.iter()
                .enumerate()
                .map(|(i, (x, y))| {
                    format!(
                        "{}{:.2},{:.2}",
                        if i == 0 { "M" } else { " L" },
                        sx(*x),
                        sy(*y)
                    )
                })
                .collect()
        };
        for pick in [|p: &CurvePoint| p.lower, |p: &CurvePoint| p.upper] {
            let v: Vec<(f64, f64)> = self
                .points
                .iter()
                .filter_map(|p| pick(p).map(|y| (self.x_of(p.t), y)))
                .collect();
            if v.len() > 1 {
                let _ = writeln!(
                    out,
                    r#"<path d="{}" fill="none" stroke="gray" stroke-dasharray="6,4"/>"#,
                    path(v)
                );
            }
        }
        let main: Vec<(f64, f64)> = self
            .points
            .iter()
            .map(|p| (self.x_of(p.t), p.value))
            .collect();
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
            path(main)
        );
        out.push_str("</svg>\n");
        out
    }
}

fn range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// OLS of `y` on `x`: `(intercept, slope, R²)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some((my - slope * mx, slope, r2))
}
