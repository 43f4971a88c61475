//! CSV rows and plot series.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use freesym::check::CheckRow;
use freesym::SymmetricSpace;
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: &str = "experiment,instance,seed,quantity,lhs,rhs,constant,slack,pass,ms";
pub const PLOT_HEADER: &str = "series,x,y";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub instance: usize,
    pub seed: u64,
    /// `name@space` when the row belongs to a space.
    pub quantity: String,
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub slack: f64,
    pub pass: bool,
    pub ms: u64,
    #[serde(skip)]
    pub name: String,
    #[serde(skip)]
    pub space: Option<SymmetricSpace>,
    #[serde(skip)]
    pub model_n: Option<usize>,
}

impl ReportRow {
    pub fn from_check(experiment: &str, instance: usize, instance_seed: u64, row: CheckRow, model_n: usize, ms: u64) -> Self {
        let space = row.space.as_deref().and_then(|s| s.parse().ok());
        let quantity = match &row.space {
            Some(s) => format!("{}@{s}", row.quantity),
            None => row.quantity.clone(),
        };
        Self {
            experiment: experiment.into(),
            instance,
            seed: row.seed.unwrap_or(instance_seed),
            quantity,
            lhs: row.lhs,
            rhs: row.rhs,
            constant: row.constant,
            slack: row.slack,
            pass: row.pass,
            ms,
            name: row.quantity,
            space,
            model_n: Some(model_n),
        }
    }

    /// An instance that could not be evaluated.
    pub fn failure(experiment: &str, instance: usize, seed: u64, reason: &str, ms: u64) -> Self {
        let row = CheckRow::failed(format!("failed: {reason}"));
        Self { model_n: None, ..Self::from_check(experiment, instance, seed, row, 0, ms) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Plotdata,
}

pub fn to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = String::from_utf8(w.into_inner()?)?;
    Ok(format!("{CSV_HEADER}\n{body}"))
}

pub fn from_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for (i, r) in csv::Reader::from_reader(text.as_bytes()).deserialize().enumerate() {
        let mut row: ReportRow = r.with_context(|| format!("CSV record {}", i + 1))?;
        let (name, space) = match row.quantity.split_once('@') {
            Some((n, s)) => (n.to_string(), s.parse().ok()),
            None => (row.quantity.clone(), None),
        };
        row.name = name;
        row.space = space;
        rows.push(row);
    }
    Ok(rows)
}

/// One series per quantity and inequality side (`lhs`, and `constant·rhs`).
/// Rows over `L₁ + tL∞` are plotted against `t`; all others against the
/// model size `N`, with the space in the series name.
pub fn plot_series(rows: &[ReportRow]) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.lhs.is_finite() && r.rhs.is_finite()) {
        let (key, x) = match (&r.space, r.model_n) {
            (Some(SymmetricSpace::L1PlusTLinf(t)), _) => (r.name.clone(), *t),
            (Some(s), Some(n)) => (format!("{}@{s}", r.name), n as f64),
            (None, Some(n)) => (r.name.clone(), n as f64),
            _ => continue,
        };
        series.entry(format!("{key}:lhs")).or_default().push((x, r.lhs));
        series.entry(format!("{key}:rhs")).or_default().push((x, r.constant * r.rhs));
    }
    series
}

pub fn to_plotdata(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for (name, points) in plot_series(rows) {
        for (x, y) in points {
            w.serialize((&name, x, y))?;
        }
    }
    Ok(format!("{PLOT_HEADER}\n{}", String::from_utf8(w.into_inner()?)?))
}

pub fn emit_report(rows: &[ReportRow], format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(rows)?,
        Format::Plotdata => to_plotdata(rows)?,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Pass and fail counts per quantity name.
pub fn summarize(rows: &[ReportRow]) -> BTreeMap<(String, String), (usize, usize)> {
    let mut out: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for r in rows {
        let e = out.entry((r.experiment.clone(), r.name.clone())).or_default();
        if r.pass {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    out
}
