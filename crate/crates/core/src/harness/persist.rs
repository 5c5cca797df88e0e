//! Run directories.
//!
//! A run directory holds `rows.csv` (one row per iteration) and `run.toml`
//! (metadata, summary and the configuration that produced it). Both are
//! written to a temporary name and renamed into place; `run.toml` goes last
//! and carries `complete = true`, so a directory without it is an
//! interrupted run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::sim::{IterationRow, RunMeta, RunRecord, RunSummary};

pub const ROWS_FILE: &str = "rows.csv";
pub const RUN_FILE: &str = "run.toml";
pub const OUTPUT_ROOT_ENV: &str = "DCS3GD_OUTPUT_ROOT";
pub const VERSION: &str = concat!("dcs3gd-core ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub version: String,
    pub complete: bool,
    pub label: String,
    pub wall_time_secs: f64,
    pub meta: RunMeta,
    pub summary: RunSummary,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub file: RunFile,
    pub rows: Vec<IterationRow>,
}

/// Relative output directories are placed under `$DCS3GD_OUTPUT_ROOT` when
/// it is set.
pub fn resolve_output_dir(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() && !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn rows_to_csv(rows: &[IterationRow]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record([
            "iteration",
            "simulated_time",
            "train_loss",
            "train_error",
            "mean_lambda",
            "max_abs_d",
            "grad_norm",
            "learning_rate",
            "val_loss",
            "val_error",
        ])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner()
        .map_err(|e| HarnessError::Serialize(e.to_string()))
}

pub fn write_run(
    dir: &Path,
    config: &ExperimentConfig,
    record: &RunRecord,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let marker = dir.join(RUN_FILE);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| HarnessError::io(&marker, e))?;
    }
    write_atomic(&dir.join(ROWS_FILE), &rows_to_csv(&record.rows)?)?;
    let file = RunFile {
        version: VERSION.to_string(),
        complete: true,
        label: config.label(),
        wall_time_secs: record.wall_time_secs,
        meta: record.meta.clone(),
        summary: record.summary.clone(),
        config: config.clone(),
    };
    let text = toml::to_string(&file).map_err(|e| HarnessError::Serialize(e.to_string()))?;
    write_atomic(&marker, text.as_bytes())
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, HarnessError> {
    let marker = dir.join(RUN_FILE);
    if !marker.exists() {
        return Err(HarnessError::IncompleteRun(dir.to_path_buf()));
    }
    let text = fs::read_to_string(&marker).map_err(|e| HarnessError::io(&marker, e))?;
    let file: RunFile = toml::from_str(&text).map_err(|e| HarnessError::Parse {
        path: Some(marker.clone()),
        message: e.to_string(),
    })?;
    if !file.complete {
        return Err(HarnessError::IncompleteRun(dir.to_path_buf()));
    }
    let rows_path = dir.join(ROWS_FILE);
    let mut reader = csv::Reader::from_path(&rows_path)?;
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<IterationRow>, _>>()?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        file,
        rows,
    })
}
