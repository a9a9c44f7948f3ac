//! Batch experiments: one spec in, one versioned CSV table out.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::asymptotics::{bahadur_rao_constant, pointwise_passage, theorem_constant, Prefactor};
use crate::cgf::{build_profile, passage_query, PassageQuery, TiltProfile};
use crate::error::{Error, Result};
use crate::models::IncrementModel;
use crate::montecarlo::{estimate_pointwise, estimate_theorem_constant, MonteCarloEstimate};
use crate::oracle::{exact_pointwise, GridSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_L: u64 = 100;
pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_GRID_H: f64 = 0.01;
/// Compare mode only runs the grid oracle up to this level.
pub const ORACLE_MAX_U: f64 = 15.0;

pub const COLUMNS: [&str; 24] = [
    "mode",
    "u",
    "k_u",
    "theta_u",
    "alpha",
    "alpha_bar",
    "alpha_zero",
    "lambda_alpha",
    "asymptotic_log",
    "asymptotic_linear",
    "constant",
    "mc_mean",
    "mc_log",
    "mc_stderr",
    "ratio",
    "oracle_value",
    "oracle_error",
    "L",
    "j_mean",
    "j_stderr",
    "j_log",
    "stabilized",
    "seed",
    "runtime_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Profile,
    Asymptotic,
    Simulate,
    Compare,
    Constant,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Profile => "profile",
            Mode::Asymptotic => "asymptotic",
            Mode::Simulate => "simulate",
            Mode::Compare => "compare",
            Mode::Constant => "constant",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "profile" => Ok(Mode::Profile),
            "asymptotic" => Ok(Mode::Asymptotic),
            "simulate" => Ok(Mode::Simulate),
            "compare" => Ok(Mode::Compare),
            "constant" => Ok(Mode::Constant),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub model: IncrementModel,
    pub rho: f64,
    pub u_values: Vec<f64>,
    pub n_samples: u64,
    pub seed: u64,
    pub mode: Mode,
    pub constant_l_values: Vec<u64>,
    pub grid_h: f64,
    pub output_path: PathBuf,
}

/// Parses a flat `key = value` config. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1)))?;
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        pairs.insert(key.trim().to_string(), value.to_string());
    }
    Ok(pairs)
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse '{s}'")))
        })
        .collect()
}

fn parse_scalar<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{raw}'")))
}

impl ExperimentSpec {
    /// Builds a spec from merged config pairs. Known keys: `mode`, `model`,
    /// `rho`, `u`, `samples`, `seed`, `L`, `h`, `out`.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        const KNOWN: [&str; 9] = ["mode", "model", "rho", "u", "samples", "seed", "L", "h", "out"];
        if let Some(key) = pairs.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        let get = |key: &str| {
            pairs
                .get(key)
                .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
        };
        let mode: Mode = get("mode")?.parse()?;
        let model: IncrementModel = get("model")?
            .parse()
            .map_err(|e: Error| Error::Config(format!("model: {e}")))?;
        let spec = ExperimentSpec {
            model,
            rho: parse_scalar("rho", get("rho")?)?,
            u_values: match pairs.get("u") {
                Some(raw) => parse_list("u", raw)?,
                None => Vec::new(),
            },
            n_samples: match pairs.get("samples") {
                Some(raw) => parse_scalar("samples", raw)?,
                None => DEFAULT_SAMPLES,
            },
            seed: match pairs.get("seed") {
                Some(raw) => parse_scalar("seed", raw)?,
                None => DEFAULT_SEED,
            },
            mode,
            constant_l_values: match pairs.get("L") {
                Some(raw) => parse_list("L", raw)?,
                None => vec![DEFAULT_L],
            },
            grid_h: match pairs.get("h") {
                Some(raw) => parse_scalar("h", raw)?,
                None => DEFAULT_GRID_H,
            },
            output_path: PathBuf::from(get("out")?),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if self.mode != Mode::Constant && self.u_values.is_empty() {
            return Err(Error::Config("u list is empty".into()));
        }
        if let Some(u) = self.u_values.iter().find(|u| !(u.is_finite() && **u > 0.0)) {
            return Err(Error::Config(format!("u values must be positive, got {u}")));
        }
        let samples_needed = matches!(self.mode, Mode::Simulate | Mode::Compare | Mode::Constant);
        if samples_needed && self.n_samples == 0 {
            return Err(Error::Config(format!("{} mode needs samples > 0", self.mode)));
        }
        if self.constant_l_values.is_empty() || self.constant_l_values.contains(&0) {
            return Err(Error::Config("L values must be a nonempty list of positive integers".into()));
        }
        if !(self.grid_h > 0.0 && self.grid_h.is_finite()) {
            return Err(Error::Config(format!("h must be positive, got {}", self.grid_h)));
        }
        Ok(())
    }

    fn max_l(&self) -> u64 {
        *self.constant_l_values.iter().max().expect("validated nonempty")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentRow {
    pub mode: String,
    pub u: Option<f64>,
    pub k_u: Option<f64>,
    pub theta_u: Option<f64>,
    pub alpha: f64,
    pub alpha_bar: f64,
    pub alpha_zero: f64,
    pub lambda_alpha: f64,
    pub asymptotic_log: Option<f64>,
    pub asymptotic_linear: Option<f64>,
    pub constant: Option<f64>,
    pub mc_mean: Option<f64>,
    pub mc_log: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub ratio: Option<f64>,
    pub oracle_value: Option<f64>,
    pub oracle_error: Option<f64>,
    pub big_l: Option<u64>,
    pub j_mean: Option<f64>,
    pub j_stderr: Option<f64>,
    pub j_log: Option<f64>,
    pub stabilized: Option<bool>,
    pub seed: Option<u64>,
    pub runtime_ms: u128,
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentRow {
    fn base(mode: Mode, profile: &TiltProfile) -> Self {
        ExperimentRow {
            mode: mode.to_string(),
            alpha: profile.alpha,
            alpha_bar: profile.alpha_bar,
            alpha_zero: profile.alpha_zero,
            lambda_alpha: profile.lambda_alpha,
            ..Default::default()
        }
    }

    fn with_query(mut self, query: &PassageQuery) -> Self {
        self.u = Some(query.u);
        self.k_u = Some(query.k_u);
        self.theta_u = Some(query.theta_u);
        self
    }

    fn with_mc(mut self, mc: &MonteCarloEstimate) -> Self {
        self.mc_mean = Some(mc.mean);
        self.mc_log = Some(mc.log_mean);
        self.mc_stderr = Some(mc.stderr);
        self.seed = Some(mc.seed);
        self
    }

    pub fn record(&self) -> Vec<String> {
        vec![
            self.mode.clone(),
            cell(self.u),
            cell(self.k_u),
            cell(self.theta_u),
            self.alpha.to_string(),
            self.alpha_bar.to_string(),
            self.alpha_zero.to_string(),
            self.lambda_alpha.to_string(),
            cell(self.asymptotic_log),
            cell(self.asymptotic_linear),
            cell(self.constant),
            cell(self.mc_mean),
            cell(self.mc_log),
            cell(self.mc_stderr),
            cell(self.ratio),
            cell(self.oracle_value),
            cell(self.oracle_error),
            cell(self.big_l),
            cell(self.j_mean),
            cell(self.j_stderr),
            cell(self.j_log),
            cell(self.stabilized),
            cell(self.seed),
            self.runtime_ms.to_string(),
        ]
    }
}

/// `mc / asymptotic`, computed in log space; absent unless both sides are
/// finite and nonzero.
fn ratio(mc_log: f64, asymptotic_log: f64) -> Option<f64> {
    let r = (mc_log - asymptotic_log).exp();
    (mc_log.is_finite() && asymptotic_log.is_finite() && r.is_finite() && r > 0.0).then_some(r)
}

/// `|J_a − J_b| ≤ 5·√(se_a² + se_b²)`.
pub fn stabilized(a: &MonteCarloEstimate, b: &MonteCarloEstimate) -> bool {
    (a.mean - b.mean).abs() <= 5.0 * a.stderr.hypot(b.stderr)
}

/// For each `L`, the index of the run to compare against: `2L` if present,
/// else `L/2`, else the nearest other `L`.
fn stabilization_partner(ls: &[u64], i: usize) -> Option<usize> {
    let l = ls[i];
    let find = |target: u64| ls.iter().position(|&x| x == target);
    find(2 * l)
        .or_else(|| l.is_multiple_of(2).then(|| find(l / 2)).flatten())
        .or_else(|| {
            (0..ls.len())
                .filter(|&j| ls[j] != l)
                .min_by_key(|&j| (ls[j].abs_diff(l), j))
        })
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, u128)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_millis()))
}

fn profile_rows(spec: &ExperimentSpec, profile: &TiltProfile) -> Result<Vec<ExperimentRow>> {
    spec.u_values
        .iter()
        .map(|&u| {
            let (row, ms) = timed(|| Ok(ExperimentRow::base(spec.mode, profile).with_query(&passage_query(profile, u)?)))?;
            Ok(ExperimentRow { runtime_ms: ms, ..row })
        })
        .collect()
}

fn asymptotic_rows(spec: &ExperimentSpec, profile: &TiltProfile) -> Result<Vec<ExperimentRow>> {
    spec.u_values
        .iter()
        .map(|&u| {
            let (row, ms) = timed(|| {
                let query = passage_query(profile, u)?;
                let shape = pointwise_passage(profile, &query, Prefactor::ShapeOnly)?;
                Ok(ExperimentRow {
                    asymptotic_log: Some(shape.log_value),
                    asymptotic_linear: Some(shape.value()),
                    ..ExperimentRow::base(spec.mode, profile).with_query(&query)
                })
            })?;
            Ok(ExperimentRow { runtime_ms: ms, ..row })
        })
        .collect()
}

fn simulate_rows(spec: &ExperimentSpec, profile: &TiltProfile) -> Result<Vec<ExperimentRow>> {
    spec.u_values
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let (row, ms) = timed(|| {
                let query = passage_query(profile, u)?;
                let seed = spec.seed.wrapping_add(i as u64);
                let mc = estimate_pointwise(&spec.model, query.u, query.k_floor, spec.n_samples, seed)?;
                Ok(ExperimentRow::base(spec.mode, profile).with_query(&query).with_mc(&mc))
            })?;
            Ok(ExperimentRow { runtime_ms: ms, ..row })
        })
        .collect()
}

fn oracle_cell(spec: &ExperimentSpec, query: &PassageQuery) -> Result<Option<(f64, f64)>> {
    if query.u > ORACLE_MAX_U {
        return Ok(None);
    }
    let grid = GridSpec::for_walk(&spec.model, query.u, query.k_floor, spec.grid_h)?;
    match exact_pointwise(&spec.model, query.u, query.k_floor, &grid) {
        Ok(v) => Ok(Some((v.value, v.error_bound))),
        Err(Error::BudgetExceeded(_)) | Err(Error::TruncationTooLossy(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn compare_rows(spec: &ExperimentSpec, profile: &TiltProfile) -> Result<Vec<ExperimentRow>> {
    let queries = spec
        .u_values
        .iter()
        .map(|&u| {
            let q = passage_query(profile, u)?;
            if q.theta_u != 0.0 {
                return Err(Error::Config(format!(
                    "compare mode needs integer k_u; u = {u} gives k_u = {}",
                    q.k_u
                )));
            }
            Ok(q)
        })
        .collect::<Result<Vec<_>>>()?;

    let big_l = spec.max_l();
    let (j, j_ms) = timed(|| estimate_theorem_constant(&spec.model, profile, big_l, spec.n_samples, spec.seed))?;
    let c_hat = theorem_constant(profile, j.mean);

    queries
        .iter()
        .enumerate()
        .map(|(i, query)| {
            let (row, ms) = timed(|| {
                let asym = pointwise_passage(profile, query, Prefactor::Estimated(c_hat))?;
                let seed = spec.seed.wrapping_add(1 + i as u64);
                let mc = estimate_pointwise(&spec.model, query.u, query.k_floor, spec.n_samples, seed)?;
                let oracle = oracle_cell(spec, query)?;
                Ok(ExperimentRow {
                    asymptotic_log: Some(asym.log_value),
                    asymptotic_linear: Some(asym.value()),
                    constant: Some(c_hat),
                    ratio: ratio(mc.log_mean, asym.log_value),
                    oracle_value: oracle.map(|o| o.0),
                    oracle_error: oracle.map(|o| o.1),
                    big_l: Some(big_l),
                    j_mean: Some(j.mean),
                    j_stderr: Some(j.stderr),
                    j_log: Some(j.log_mean),
                    ..ExperimentRow::base(spec.mode, profile).with_query(query).with_mc(&mc)
                })
            })?;
            Ok(ExperimentRow {
                runtime_ms: ms + if i == 0 { j_ms } else { 0 },
                ..row
            })
        })
        .collect()
}

fn constant_rows(spec: &ExperimentSpec, profile: &TiltProfile) -> Result<Vec<ExperimentRow>> {
    let ls = &spec.constant_l_values;
    let runs = ls
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let seed = spec.seed.wrapping_add(i as u64);
            timed(|| estimate_theorem_constant(&spec.model, profile, l, spec.n_samples, seed))
        })
        .collect::<Result<Vec<_>>>()?;
    let c_br = bahadur_rao_constant(profile);
    Ok(runs
        .iter()
        .enumerate()
        .map(|(i, (j, ms))| ExperimentRow {
            constant: Some(c_br * j.mean),
            big_l: Some(ls[i]),
            j_mean: Some(j.mean),
            j_stderr: Some(j.stderr),
            j_log: Some(j.log_mean),
            stabilized: stabilization_partner(ls, i).map(|p| stabilized(j, &runs[p].0)),
            seed: Some(j.seed),
            runtime_ms: *ms,
            ..ExperimentRow::base(spec.mode, profile)
        })
        .collect())
}

/// Runs the experiment and returns its rows without writing anything.
pub fn run_rows(spec: &ExperimentSpec) -> Result<Vec<ExperimentRow>> {
    spec.validate()?;
    let profile = build_profile(&spec.model, spec.rho)?;
    match spec.mode {
        Mode::Profile => profile_rows(spec, &profile),
        Mode::Asymptotic => asymptotic_rows(spec, &profile),
        Mode::Simulate => simulate_rows(spec, &profile),
        Mode::Compare => compare_rows(spec, &profile),
        Mode::Constant => constant_rows(spec, &profile),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Comment block recording the full spec; `# schema=` comes first.
pub fn header_lines(spec: &ExperimentSpec) -> Vec<String> {
    vec![
        format!("# schema={SCHEMA_VERSION}"),
        format!("# version={} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        format!("# mode={}", spec.mode),
        format!("# model={}", spec.model),
        format!("# rho={}", spec.rho),
        format!("# u={}", join(&spec.u_values)),
        format!("# samples={}", spec.n_samples),
        format!("# seed={}", spec.seed),
        format!("# L={}", join(&spec.constant_l_values)),
        format!("# h={}", spec.grid_h),
    ]
}

pub fn write_csv<W: Write>(spec: &ExperimentSpec, rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut out = out;
    for line in header_lines(spec) {
        writeln!(out, "{line}")?;
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(COLUMNS)?;
    for row in rows {
        writer.write_record(row.record())?;
    }
    writer.flush()?;
    Ok(())
}

/// Runs the experiment and writes the CSV to `spec.output_path`.
pub fn run(spec: &ExperimentSpec) -> Result<Vec<ExperimentRow>> {
    let rows = run_rows(spec)?;
    write_to_path(spec, &rows, &spec.output_path)?;
    Ok(rows)
}

fn write_to_path(spec: &ExperimentSpec, rows: &[ExperimentRow], path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut buf = BufWriter::new(file);
    write_csv(spec, rows, &mut buf)?;
    buf.flush()?;
    Ok(())
}
