//! Experiment records and their CSV persistence.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RECORDS_FILE: &str = "records.csv";
pub const CSV_HEADER: &str = "run_id,strategy,fraction,seed,stage,split,domain,metric,value,timestamp";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub run_id: String,
    pub strategy: String,
    pub fraction: f64,
    pub seed: u64,
    pub stage: usize,
    /// `train`, `val` or `test`.
    pub split: String,
    pub domain: String,
    /// Per-epoch metrics carry the epoch as a suffix, e.g. `val_acc@3`.
    pub metric: String,
    pub value: f64,
    pub timestamp: String,
}

impl ExperimentRecord {
    /// Identity used for uniqueness checks.
    pub fn key(&self) -> (&str, usize, &str, &str, &str) {
        (&self.run_id, self.stage, &self.split, &self.domain, &self.metric)
    }

    /// Base metric name without the epoch suffix.
    pub fn base_metric(&self) -> &str {
        self.metric.split('@').next().unwrap_or(&self.metric)
    }
}

/// Current UTC time, second precision.
pub fn now_timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn write_records(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let err = |detail: String| Error::Records { path: path.to_path_buf(), detail };
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in records {
        if !r.value.is_finite() {
            return Err(err(format!("non-finite value for {}", r.metric)));
        }
        w.serialize(r).map_err(|e| err(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| err(e.to_string()))?;
    let mut bytes = format!("{CSV_HEADER}\n").into_bytes();
    bytes.extend(body);
    let tmp = path.with_extension("csv.tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let err = |detail: String| Error::Records { path: path.to_path_buf(), detail };
    let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let header: Vec<String> = r.headers().map_err(|e| err(e.to_string()))?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(err(format!("unexpected header `{}`", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(|e| err(e.to_string()))).collect()
}

/// All `records.csv` files under `dir`, in path order.
pub fn record_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", dir.display())));
    }
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Config(e.to_string()))?;
        if entry.file_type().is_file() && entry.file_name() == RECORDS_FILE {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

/// Merges every per-run records file under `dir`.
pub fn collect_records(dir: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut out = Vec::new();
    for f in record_files(dir)? {
        out.extend(read_records(&f)?);
    }
    Ok(out)
}
