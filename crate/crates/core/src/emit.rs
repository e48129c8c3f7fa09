//! CSV and JSON output.
//!
//! CSV files carry one flat table with a fixed header; JSON files wrap a whole
//! report in an envelope with a schema version.

use crate::experiment::{BreakdownRow, DesignRow, LandscapeCell, RocPoint, SweepPoint};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema version {0}")]
    Schema(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// A row type with a fixed CSV layout.
pub trait Tabular {
    const COLUMNS: &'static [&'static str];
    fn record(&self) -> Vec<String>;
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl Tabular for RocPoint {
    const COLUMNS: &'static [&'static str] =
        &["detector", "pfa_target", "eta", "pd_theory", "pfa_mc", "pd_mc", "stderr_mc"];

    fn record(&self) -> Vec<String> {
        vec![
            self.detector.clone(),
            self.pfa_target.to_string(),
            self.eta.to_string(),
            opt(self.pd_theory),
            self.pfa_mc.to_string(),
            self.pd_mc.to_string(),
            self.stderr_mc.to_string(),
        ]
    }
}

impl Tabular for LandscapeCell {
    const COLUMNS: &'static [&'static str] = &["tau1", "tau2", "tau3", "objective"];

    fn record(&self) -> Vec<String> {
        vec![self.tau1.to_string(), self.tau2.to_string(), self.tau3.to_string(), opt(self.objective)]
    }
}

impl Tabular for DesignRow {
    const COLUMNS: &'static [&'static str] =
        &["method", "bits", "p_e", "sigma_n2", "objective", "iterations", "converged", "thresholds"];

    fn record(&self) -> Vec<String> {
        let t: Vec<String> = self.thresholds.iter().map(f64::to_string).collect();
        vec![
            self.method.clone(),
            self.bits.to_string(),
            self.p_e.to_string(),
            self.sigma_n2.to_string(),
            self.objective.to_string(),
            self.iterations.to_string(),
            self.converged.to_string(),
            t.join(";"),
        ]
    }
}

impl Tabular for SweepPoint {
    const COLUMNS: &'static [&'static str] =
        &["case", "m_total", "sense", "feasible", "total_fi", "bits_used", "lambda", "pd_theory"];

    fn record(&self) -> Vec<String> {
        vec![
            self.case.clone(),
            self.m_total.to_string(),
            self.sense.to_string(),
            self.feasible.to_string(),
            opt(self.total_fi),
            opt(self.bits_used),
            opt(self.lambda),
            opt(self.pd_theory),
        ]
    }
}

impl Tabular for BreakdownRow {
    const COLUMNS: &'static [&'static str] = &["case", "m_total", "sense", "level", "error_class", "count"];

    fn record(&self) -> Vec<String> {
        vec![
            self.case.clone(),
            self.m_total.to_string(),
            self.sense.to_string(),
            self.level.clone(),
            self.error_class.to_string(),
            self.count.to_string(),
        ]
    }
}

pub fn to_csv<T: Tabular>(rows: &[T]) -> Result<String, EmitError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(T::COLUMNS)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub data: T,
}

pub fn to_json<T: Serialize>(scenario: &str, seed: u64, data: &T) -> Result<String, EmitError> {
    let envelope = Envelope { schema_version: SCHEMA_VERSION, scenario: scenario.to_string(), seed, data };
    let mut text = serde_json::to_string_pretty(&envelope)?;
    text.push('\n');
    Ok(text)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<Envelope<T>, EmitError> {
    let envelope: Envelope<T> = serde_json::from_str(text)?;
    if envelope.schema_version != SCHEMA_VERSION {
        return Err(EmitError::Schema(envelope.schema_version));
    }
    Ok(envelope)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), EmitError> {
    std::fs::write(path, contents).map_err(|source| EmitError::Io { path: path.display().to_string(), source })
}
