//! Per-slice / per-block result reports in JSON or CSV.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// `.csv` selects CSV, anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Effective configuration of the run.
    pub config: serde_json::Value,
}

impl ReportMetadata {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed: None,
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub slice_index: usize,
    pub sigma: Option<f64>,
    pub n_dof: Option<f64>,
    pub voxel_count: usize,
    pub converged: bool,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: ReportMetadata,
    pub results: Vec<ReportRecord>,
}

const CSV_HEADER: [&str; 6] = ["slice_index", "sigma", "n_dof", "voxel_count", "converged", "method"];

pub fn write_report(report: &Report, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    if report.results.is_empty() {
        return Err(Error::Config("refusing to write a report without records".into()));
    }
    let bytes = match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Serialize(e.to_string()))?;
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let ser = |e: csv::Error| Error::Serialize(e.to_string());
            w.write_record(CSV_HEADER).map_err(ser)?;
            for r in &report.results {
                let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
                w.write_record([
                    r.slice_index.to_string(),
                    opt(r.sigma),
                    opt(r.n_dof),
                    r.voxel_count.to_string(),
                    r.converged.to_string(),
                    r.method.clone(),
                ])
                .map_err(ser)?;
            }
            w.into_inner().map_err(|e| Error::Serialize(e.to_string()))?
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a JSON report back.
pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serialize(format!("{}: {e}", path.display())))
}
