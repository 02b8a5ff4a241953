//! Metric and model file output: JSON lines per epoch per seed, CSV summary
//! tables, and versioned model documents. All writes go through a
//! write-temp-then-rename helper so partially written files never appear.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use umset_core::model::Network;

use crate::experiment::ExperimentResult;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },
    #[error("model document {path} has unsupported version {found} (expected {expected})")]
    ModelVersion {
        path: String,
        found: u32,
        expected: u32,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> ExportError {
    ExportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Atomic file write: the content lands under a temporary name in the same
/// directory and is renamed into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ExportError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_owned());
    let tmp = dir.join(format!(".{file_name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(contents).map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// One JSONL record: a single epoch of a single seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub fingerprint: String,
    pub method: String,
    pub seed: u64,
    pub epoch: usize,
    pub train_risk: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_error: Option<f64>,
}

/// Serialize every epoch of every successful trial as JSON lines.
pub fn metrics_jsonl(result: &ExperimentResult) -> String {
    let mut out = String::new();
    for trial in &result.trials {
        let Some(record) = &trial.record else { continue };
        for epoch in &record.epochs {
            let line = MetricsLine {
                fingerprint: result.fingerprint.clone(),
                method: record.method.to_string(),
                seed: record.seed,
                epoch: epoch.epoch,
                train_risk: epoch.train_risk,
                test_error: epoch.test_error,
            };
            out.push_str(&serde_json::to_string(&line).expect("metrics line serializes"));
            out.push('\n');
        }
    }
    out
}

pub fn write_metrics_jsonl(path: &Path, result: &ExperimentResult) -> Result<(), ExportError> {
    write_atomic(path, metrics_jsonl(result).as_bytes())
}

/// Summary CSV mirroring a `method × dataset × setting → mean(std)` table.
pub fn summary_csv(results: &[&ExperimentResult]) -> String {
    let mut out = String::from(
        "method,dataset,setting,seeds,failed,mean_error,std_error,mean_wall_secs,fingerprint\n",
    );
    for result in results {
        let agg = &result.aggregate;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            result.config.method,
            result.config.data.dataset_name(),
            result.config.setting_label(),
            agg.succeeded,
            agg.failed,
            fmt_opt(agg.mean_error),
            fmt_opt(agg.std_error),
            fmt_opt(agg.mean_wall_secs),
            result.fingerprint,
        ));
    }
    out
}

pub fn write_summary_csv(path: &Path, results: &[&ExperimentResult]) -> Result<(), ExportError> {
    write_atomic(path, summary_csv(results).as_bytes())
}

/// Sweep table: one row per axis value.
pub fn sweep_csv(axis: &str, cells: &[(f64, ExperimentResult)]) -> String {
    let mut out = String::from("axis,value,seeds,failed,mean_error,std_error\n");
    for (value, result) in cells {
        let agg = &result.aggregate;
        out.push_str(&format!(
            "{axis},{value},{},{},{},{}\n",
            agg.succeeded,
            agg.failed,
            fmt_opt(agg.mean_error),
            fmt_opt(agg.std_error),
        ));
    }
    out
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map_or_else(String::new, |v| v.to_string())
}

const MODEL_VERSION: u32 = 1;

/// Versioned on-disk model document: layer widths plus flat row-major
/// weight arrays and bias vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub network: Network,
}

pub fn save_model(path: &Path, network: &Network) -> Result<(), ExportError> {
    let doc = ModelFile {
        version: MODEL_VERSION,
        network: network.clone(),
    };
    let json = serde_json::to_string_pretty(&doc).expect("model serializes");
    write_atomic(path, json.as_bytes())
}

pub fn load_model(path: &Path) -> Result<Network, ExportError> {
    let text = fs::read_to_string(path).map_err(|source| ExportError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let doc: ModelFile = serde_json::from_str(&text).map_err(|e| ExportError::Format {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    if doc.version != MODEL_VERSION {
        return Err(ExportError::ModelVersion {
            path: path.display().to_string(),
            found: doc.version,
            expected: MODEL_VERSION,
        });
    }
    Ok(doc.network)
}
