//! CSV tables and JSON summaries.
//!
//! Each run writes `<experiment>.csv`, `<experiment>.json` and
//! `run_info.json` to the output directory. The first two are a pure
//! function of the config; wall-clock time lives only in `run_info.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentId};
use crate::error::{LabError, Result};

pub fn version() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("LAB_GIT_DESCRIBE"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    /// Floats get 17 significant digits, which round-trips every double.
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Float(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// One pass/fail comparison against a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance condition, e.g. `<= 0.35`.
    pub condition: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, condition: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), value, condition: condition.into(), pass }
    }
}

/// Result of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub experiment: ExperimentId,
    pub version: String,
    pub config: ExperimentConfig,
    /// Experiment-specific estimates: slopes with intervals, p-values, means.
    pub summary: serde_json::Value,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub experiment: ExperimentId,
    pub version: String,
    pub runtime_seconds: f64,
    pub threads: usize,
}

pub struct Outputs {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub run_info: PathBuf,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| LabError::Io { path: path.into(), source })
}

pub fn write_outputs(dir: &Path, report: &StatReport, table: &Table, info: &RunInfo) -> Result<Outputs> {
    fs::create_dir_all(dir).map_err(|source| LabError::Io { path: dir.into(), source })?;
    let id = report.experiment.as_str();
    let out = Outputs {
        csv: dir.join(format!("{id}.csv")),
        json: dir.join(format!("{id}.json")),
        run_info: dir.join("run_info.json"),
    };
    write(&out.csv, &table.to_csv()?)?;
    write(&out.json, &(serde_json::to_string_pretty(report)? + "\n"))?;
    write(&out.run_info, &(serde_json::to_string_pretty(info)? + "\n"))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300, 12345.678901234567] {
            let s = Cell::Float(v).render();
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1u64.into(), "x,y".into()]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n1,\"x,y\"\n");
    }
}
