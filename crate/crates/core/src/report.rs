//! Plot-ready data from an experiment CSV: the CGF curve with its tangent at
//! `α` (which meets the axis at `ᾱ`), and the ratio-vs-`u` series.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::cgf::tangent_intercept;
use crate::error::{Error, Result};
use crate::experiment::SCHEMA_VERSION;
use crate::models::IncrementModel;

pub const CURVE_POINTS: usize = 201;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub curve: PathBuf,
    pub ratios: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub s: f64,
    pub cgf: f64,
    pub tangent: f64,
}

struct ParsedRun {
    model: IncrementModel,
    rows: Vec<BTreeMap<String, String>>,
}

fn read_run(csv_path: &Path) -> Result<ParsedRun> {
    let file = File::open(csv_path)?;
    let mut meta = BTreeMap::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        let Some(comment) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = comment.trim().split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    match meta.get("schema") {
        Some(v) if v == &SCHEMA_VERSION.to_string() => {}
        Some(v) => return Err(Error::Schema(format!("unsupported schema version {v}"))),
        None => return Err(Error::Schema("missing '# schema=' header".into())),
    }
    let model: IncrementModel = meta
        .get("model")
        .ok_or_else(|| Error::Schema("missing '# model=' header".into()))?
        .parse()?;

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(csv_path)?;
    let headers = reader.headers()?.clone();
    for required in ["u", "alpha", "alpha_bar", "ratio"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Schema(format!("missing column '{required}'")));
        }
    }
    let rows = reader
        .records()
        .map(|rec| {
            let rec = rec?;
            Ok(headers
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Err(Error::Schema("no data rows".into()));
    }
    Ok(ParsedRun { model, rows })
}

fn number(row: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    match row.get(key).map(String::as_str) {
        None | Some("") => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| Error::Schema(format!("column {key}: cannot parse '{raw}'"))),
    }
}

/// `Λ` on a grid around `α` together with the tangent line at `α`.
pub fn cgf_curve(model: &IncrementModel, alpha: f64, points: usize) -> Result<Vec<CurvePoint>> {
    let big_lambda = model.cgf(alpha)?;
    let (slope, _) = model.cgf_derivatives(alpha)?;
    let lo = -0.25 * alpha.abs().max(0.5);
    let hi = (1.75 * alpha).min(0.5 * (alpha + model.s_max()));
    (0..points)
        .map(|i| {
            let s = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            Ok(CurvePoint {
                s,
                cgf: model.cgf(s)?,
                tangent: big_lambda + slope * (s - alpha),
            })
        })
        .collect()
}

/// Writes `<stem>_curve.csv` and `<stem>_ratios.csv` into `out_dir`.
pub fn render_report(csv_path: &Path, out_dir: &Path) -> Result<ReportFiles> {
    let run = read_run(csv_path)?;
    fs::create_dir_all(out_dir)?;
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());

    let first = &run.rows[0];
    let alpha = number(first, "alpha")?.ok_or_else(|| Error::Schema("empty alpha".into()))?;
    let alpha_bar = number(first, "alpha_bar")?.ok_or_else(|| Error::Schema("empty alpha_bar".into()))?;
    let x_intercept = tangent_intercept(&run.model, alpha)?;

    let curve = out_dir.join(format!("{stem}_curve.csv"));
    let mut w = csv::Writer::from_path(&curve)?;
    w.write_record(["s", "cgf", "tangent", "alpha", "alpha_bar", "x_intercept"])?;
    for p in cgf_curve(&run.model, alpha, CURVE_POINTS)? {
        w.write_record([
            p.s.to_string(),
            p.cgf.to_string(),
            p.tangent.to_string(),
            alpha.to_string(),
            alpha_bar.to_string(),
            x_intercept.to_string(),
        ])?;
    }
    w.flush()?;

    let ratios = out_dir.join(format!("{stem}_ratios.csv"));
    let mut w = csv::Writer::from_path(&ratios)?;
    w.write_record(["u", "theta_u", "ratio", "ratio_stderr", "mc_log", "asymptotic_log"])?;
    for row in &run.rows {
        let (Some(u), Some(r)) = (number(row, "u")?, number(row, "ratio")?) else {
            continue;
        };
        let se = match (number(row, "mc_stderr")?, number(row, "mc_mean")?) {
            (Some(se), Some(m)) if m > 0.0 => r * se / m,
            _ => f64::NAN,
        };
        let cell = |k: &str| -> Result<String> { Ok(number(row, k)?.map(|v| v.to_string()).unwrap_or_default()) };
        w.write_record([
            u.to_string(),
            cell("theta_u")?,
            r.to_string(),
            se.to_string(),
            cell("mc_log")?,
            cell("asymptotic_log")?,
        ])?;
    }
    w.flush()?;

    Ok(ReportFiles { curve, ratios })
}
