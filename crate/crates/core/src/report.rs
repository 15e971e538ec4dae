//! Result tables as CSV or JSON.
//!
//! Floats are written in shortest round-trip form, so parsing a written
//! table reproduces every number exactly. Timing lives only in
//! `wall_time_s`; everything else is deterministic given the seeds.

use std::io::{Read, Write};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::PropagationConfig;
use crate::verifier::{CertifiedBound, Comparison, VerificationOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::InvalidConfig(format!("unknown format `{s}`"))),
        }
    }
}

/// One verified input; `eps_or_bound` is the radius checked or, for bound
/// searches, the certified bound. `margins_min` is empty for bound rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub input_id: usize,
    pub strategy: String,
    pub under_method: String,
    pub eps_or_bound: f64,
    pub status: String,
    pub margins_min: Option<f64>,
    pub wall_time_s: f64,
}

impl ResultRecord {
    pub fn from_outcome(input_id: usize, out: &VerificationOutcome) -> Self {
        let m = out.min_margin();
        Self {
            input_id,
            strategy: out.config.strategy.to_string(),
            under_method: out.config.under_method.to_string(),
            eps_or_bound: out.eps,
            status: out.status.name().to_string(),
            margins_min: m.is_finite().then_some(m),
            wall_time_s: out.wall_time_s,
        }
    }

    pub fn from_bound(input_id: usize, cfg: &PropagationConfig, bound: &CertifiedBound) -> Self {
        Self {
            input_id,
            strategy: cfg.strategy.to_string(),
            under_method: cfg.under_method.to_string(),
            eps_or_bound: bound.epsilon,
            status: "bound".to_string(),
            margins_min: None,
            wall_time_s: bound.wall_time_s,
        }
    }
}

/// Robustness ratio at one radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub strategy: String,
    pub under_method: String,
    pub verified: usize,
    pub total: usize,
    pub ratio: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub strategy: String,
    pub under_method: String,
    pub inputs: usize,
    pub mean_bound: f64,
    /// Percent over the baseline row; empty when undefined for every input.
    pub improvement_pct: Option<f64>,
    pub baseline: bool,
    pub wall_time_s: f64,
}

pub fn compare_rows(cmp: &Comparison) -> Vec<CompareRow> {
    cmp.rows
        .iter()
        .enumerate()
        .map(|(i, row)| CompareRow {
            strategy: row.config.strategy.to_string(),
            under_method: row.config.under_method.to_string(),
            inputs: row.bounds.len(),
            mean_bound: row.mean_bound,
            improvement_pct: row.mean_improvement.map(|v| 100.0 * v),
            baseline: i == cmp.baseline,
            wall_time_s: row.wall_time_s,
        })
        .collect()
}

pub fn write_table<T: Serialize>(rows: &[T], format: Format, out: impl Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for row in rows {
                w.serialize(row).map_err(|e| Error::Report(e.to_string()))?;
            }
            w.flush().map_err(|e| Error::Report(e.to_string()))
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows).map_err(|e| Error::Report(e.to_string()))?;
            writeln!(out).map_err(|e| Error::Report(e.to_string()))
        }
    }
}

pub fn read_table<T: DeserializeOwned>(format: Format, input: impl Read) -> Result<Vec<T>> {
    match format {
        Format::Csv => csv::Reader::from_reader(input)
            .deserialize()
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|e| Error::Report(e.to_string())),
        Format::Json => serde_json::from_reader(input).map_err(|e| Error::Report(e.to_string())),
    }
}
