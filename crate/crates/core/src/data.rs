//! Observation containers: the frequency of frequencies (FoF), ρ-appearance
//! records and binned species accumulation curves, with their CSV formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed counts `n_k` of species seen exactly `k` times by the survey
/// end `t0`. Only nonzero counts are stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyOfFrequencies {
    t0: f64,
    counts: BTreeMap<u64, u64>,
}

/// Exact integer summaries of a FoF.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    /// Number of recorded species, `Σ n_k`.
    pub n_plus: u64,
    /// Number of recorded individuals, `Σ k·n_k`.
    pub s_total: u64,
    /// Largest observed frequency (0 for an empty survey).
    pub max_k: u64,
}

fn check_t0(t0: f64) -> Result<()> {
    if t0.is_finite() && t0 > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "t0 must be a positive finite number, got {t0}"
        )))
    }
}

impl FrequencyOfFrequencies {
    /// Builds a FoF from `(k, n_k)` pairs. Zero counts are dropped; repeated
    /// `k` and `k = 0` are rejected.
    pub fn new(t0: f64, pairs: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        check_t0(t0)?;
        let mut counts = BTreeMap::new();
        for (k, n) in pairs {
            if k == 0 {
                return Err(Error::Validation("frequency k must be at least 1".into()));
            }
            if counts.contains_key(&k) {
                return Err(Error::Validation(format!("duplicate frequency k = {k}")));
            }
            if n > 0 {
                counts.insert(k, n);
            }
        }
        Ok(Self { t0, counts })
    }

    /// An empty survey.
    pub fn empty(t0: f64) -> Result<Self> {
        Self::new(t0, [])
    }

    /// Builds from a dense slice where `dense[i]` is `n_{i+1}`.
    pub fn from_dense(t0: f64, dense: &[u64]) -> Result<Self> {
        Self::new(
            t0,
            dense.iter().enumerate().map(|(i, &n)| (i as u64 + 1, n)),
        )
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Count of species seen exactly `k` times (0 outside the support).
    pub fn get(&self, k: u64) -> u64 {
        self.counts.get(&k).copied().unwrap_or(0)
    }

    /// Iterates `(k, n_k)` over the nonzero support in increasing `k`.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&k, &n)| (k, n))
    }

    pub fn support_len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn n_plus(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn s_total(&self) -> u64 {
        self.iter().map(|(k, n)| k * n).sum()
    }

    pub fn max_k(&self) -> u64 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }

    pub fn summarize(&self) -> Summary {
        Summary {
            n_plus: self.n_plus(),
            s_total: self.s_total(),
            max_k: self.max_k(),
        }
    }

    /// Same counts with a different survey end.
    pub fn with_t0(&self, t0: f64) -> Result<Self> {
        check_t0(t0)?;
        Ok(Self {
            t0,
            counts: self.counts.clone(),
        })
    }

    /// Adds the counts of two surveys with the same `t0`.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.t0 != other.t0 {
            return Err(Error::Validation(format!(
                "cannot merge surveys with t0 = {} and t0 = {}",
                self.t0, other.t0
            )));
        }
        let mut counts = self.counts.clone();
        for (k, n) in other.iter() {
            *counts.entry(k).or_insert(0) += n;
        }
        Ok(Self {
            t0: self.t0,
            counts,
        })
    }

    /// Expands to one frequency per recorded species, in increasing order.
    pub fn species_frequencies(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.n_plus() as usize);
        for (k, n) in self.iter() {
            out.extend(std::iter::repeat_n(k, n as usize));
        }
        out
    }

    /// Parses the `k,count` CSV format. A `# t0=<value>` comment sets the
    /// survey end; otherwise `default_t0` is used, and if that is also
    /// missing the parse fails with a configuration error.
    pub fn parse_csv(text: &str, source: &Path, default_t0: Option<f64>) -> Result<Self> {
        let mut t0 = None;
        let mut pairs = Vec::new();
        let mut seen_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = parse_annotation(comment, "t0") {
                    t0 = Some(parse_num::<f64>(v, source, line_no, "t0")?);
                }
                continue;
            }
            if !seen_header {
                if normalize_header(line) != "k,count" {
                    return Err(parse_err(
                        source,
                        line_no,
                        format!("expected header `k,count`, found `{line}`"),
                    ));
                }
                seen_header = true;
                continue;
            }
            let (k, n) = split2(line, source, line_no)?;
            let k: i64 = parse_num(k, source, line_no, "k")?;
            let n: i64 = parse_num(n, source, line_no, "count")?;
            if k < 1 {
                return Err(Error::Validation(format!(
                    "{}:{line_no}: frequency k must be ≥ 1, got {k}",
                    source.display()
                )));
            }
            if n < 0 {
                return Err(Error::Validation(format!(
                    "{}:{line_no}: count must be ≥ 0, got {n}",
                    source.display()
                )));
            }
            pairs.push((k as u64, n as u64));
        }
        let t0 = t0.or(default_t0).ok_or_else(|| {
            Error::Config(format!(
                "{}: no `# t0=` annotation and no t0 supplied",
                source.display()
            ))
        })?;
        Self::new(t0, pairs)
    }

    pub fn load(path: impl AsRef<Path>, default_t0: Option<f64>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text, path, default_t0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# t0={:?}\nk,count\n", self.t0);
        for (k, n) in self.iter() {
            let _ = writeln!(out, "{k},{n}");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Data from the ρ-appearance design: counts of species seen fewer than ρ
/// times, and the ρth appearance time of every other species.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoAppearanceData {
    rho: u32,
    t0: f64,
    low_counts: Vec<u64>,
    times: Vec<f64>,
}

impl RhoAppearanceData {
    /// `low_counts[j-1]` is `n_j` for `j < rho`.
    pub fn new(rho: u32, t0: f64, low_counts: Vec<u64>, times: Vec<f64>) -> Result<Self> {
        check_t0(t0)?;
        if rho == 0 {
            return Err(Error::Validation("rho must be at least 1".into()));
        }
        if low_counts.len() != rho as usize - 1 {
            return Err(Error::Validation(format!(
                "rho = {rho} needs exactly {} low counts, got {}",
                rho - 1,
                low_counts.len()
            )));
        }
        if let Some(bad) = times.iter().find(|&&r| !(r > 0.0 && r <= t0)) {
            return Err(Error::Validation(format!(
                "appearance time {bad} is outside (0, {t0}]"
            )));
        }
        Ok(Self {
            rho,
            t0,
            low_counts,
            times,
        })
    }

    pub fn rho(&self) -> u32 {
        self.rho
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn low_counts(&self) -> &[u64] {
        &self.low_counts
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of recorded species, `Σ n_j + m`.
    pub fn n_plus(&self) -> u64 {
        self.low_counts.iter().sum::<u64>() + self.times.len() as u64
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# t0={:?}\n# rho={}\nk,count\n", self.t0, self.rho);
        for (j, n) in self.low_counts.iter().enumerate() {
            let _ = writeln!(out, "{},{n}", j + 1);
        }
        out.push_str("time\n");
        for r in &self.times {
            let _ = writeln!(out, "{r:?}");
        }
        out
    }

    pub fn parse_csv(text: &str, source: &Path, default_t0: Option<f64>) -> Result<Self> {
        enum Section {
            None,
            Counts,
            Times,
        }
        let mut t0 = None;
        let mut rho = None;
        let mut section = Section::None;
        let mut counts = BTreeMap::new();
        let mut times = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = parse_annotation(comment, "t0") {
                    t0 = Some(parse_num::<f64>(v, source, line_no, "t0")?);
                } else if let Some(v) = parse_annotation(comment, "rho") {
                    rho = Some(parse_num::<u32>(v, source, line_no, "rho")?);
                }
                continue;
            }
            match normalize_header(line).as_str() {
                "k,count" => {
                    section = Section::Counts;
                    continue;
                }
                "time" => {
                    section = Section::Times;
                    continue;
                }
                _ => {}
            }
            match section {
                Section::None => {
                    return Err(parse_err(
                        source,
                        line_no,
                        "expected a `k,count` or `time` section header",
                    ))
                }
                Section::Counts => {
                    let (k, n) = split2(line, source, line_no)?;
                    let k: u64 = parse_num(k, source, line_no, "k")?;
                    let n: u64 = parse_num(n, source, line_no, "count")?;
                    if k == 0 || counts.insert(k, n).is_some() {
                        return Err(parse_err(
                            source,
                            line_no,
                            format!("invalid or duplicate frequency {k}"),
                        ));
                    }
                }
                Section::Times => times.push(parse_num::<f64>(line, source, line_no, "time")?),
            }
        }
        let t0 = t0.or(default_t0).ok_or_else(|| {
            Error::Config(format!(
                "{}: no `# t0=` annotation and no t0 supplied",
                source.display()
            ))
        })?;
        let rho = rho.ok_or_else(|| {
            Error::Config(format!("{}: missing `# rho=` annotation", source.display()))
        })?;
        if let Some((&k, _)) = counts.iter().find(|(&k, _)| k >= rho as u64) {
            return Err(Error::Validation(format!(
                "low count for k = {k} is not below rho = {rho}"
            )));
        }
        let low_counts = (1..rho as u64)
            .map(|k| counts.get(&k).copied().unwrap_or(0))
            .collect();
        Self::new(rho, t0, low_counts, times)
    }

    pub fn load(path: impl AsRef<Path>, default_t0: Option<f64>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse_csv(&std::fs::read_to_string(path)?, path, default_t0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// The empirical SAC observed only at breakpoints `0 < ℓ_1 < … < ℓ_m = t0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedSac {
    breakpoints: Vec<f64>,
    cumulative: Vec<u64>,
}

impl BinnedSac {
    /// `breakpoints` exclude the implicit `ℓ_0 = 0`.
    pub fn new(breakpoints: Vec<f64>, cumulative: Vec<u64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != cumulative.len() {
            return Err(Error::Validation(format!(
                "need matching nonempty breakpoints and counts (got {} and {})",
                breakpoints.len(),
                cumulative.len()
            )));
        }
        let mut prev = 0.0;
        for &l in &breakpoints {
            if !(l.is_finite() && l > prev) {
                return Err(Error::Validation(
                    "breakpoints must be positive and strictly increasing".into(),
                ));
            }
            prev = l;
        }
        if cumulative.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Validation(
                "cumulative species counts must be nondecreasing".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            cumulative,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn cumulative(&self) -> &[u64] {
        &self.cumulative
    }

    pub fn t0(&self) -> f64 {
        *self.breakpoints.last().expect("nonempty")
    }

    pub fn n_plus(&self) -> u64 {
        *self.cumulative.last().expect("nonempty")
    }

    /// Bins `times` (first-appearance times in `(0, t0]`) at the breakpoints.
    pub fn from_times(times: &[f64], breakpoints: Vec<f64>) -> Result<Self> {
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let cumulative = breakpoints
            .iter()
            .map(|&l| sorted.partition_point(|&r| r <= l) as u64)
            .collect();
        Self::new(breakpoints, cumulative)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,cum_species\n");
        for (l, n) in self.breakpoints.iter().zip(&self.cumulative) {
            let _ = writeln!(out, "{l:?},{n}");
        }
        out
    }

    pub fn parse_csv(text: &str, source: &Path) -> Result<Self> {
        let mut seen_header = false;
        let mut ts = Vec::new();
        let mut ns = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_header {
                if normalize_header(line) != "t,cum_species" {
                    return Err(parse_err(
                        source,
                        line_no,
                        format!("expected header `t,cum_species`, found `{line}`"),
                    ));
                }
                seen_header = true;
                continue;
            }
            let (t, n) = split2(line, source, line_no)?;
            let t: f64 = parse_num(t, source, line_no, "t")?;
            let n: u64 = parse_num(n, source, line_no, "cum_species")?;
            if t == 0.0 {
                if n != 0 {
                    return Err(parse_err(
                        source,
                        line_no,
                        "cumulative count at t = 0 must be 0",
                    ));
                }
                continue;
            }
            ts.push(t);
            ns.push(n);
        }
        Self::new(ts, ns)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse_csv(&std::fs::read_to_string(path)?, path)
    }
}

fn normalize_header(line: &str) -> String {
    line.split(',')
        .map(str::trim)
        .collect::<Vec<_>>()
        .join(",")
        .to_ascii_lowercase()
}

fn parse_annotation<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let (k, v) = comment.trim().split_once('=')?;
    (k.trim() == key).then(|| v.trim())
}

fn split2<'a>(line: &'a str, source: &Path, line_no: usize) -> Result<(&'a str, &'a str)> {
    let mut it = line.split(',').map(str::trim);
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => Ok((a, b)),
        _ => Err(parse_err(
            source,
            line_no,
            format!("expected two comma-separated fields, found `{line}`"),
        )),
    }
}

fn parse_num<T: std::str::FromStr>(
    s: &str,
    source: &Path,
    line_no: usize,
    field: &str,
) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(source, line_no, format!("cannot parse {field} from `{s}`")))
}

fn parse_err(source: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_path_buf(),
        line,
        message: message.into(),
    }
}
