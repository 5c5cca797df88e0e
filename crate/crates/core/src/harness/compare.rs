use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use super::persist::{load_run, LoadedRun};
use super::HarnessError;
use crate::sim::Algorithm;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub algorithm: Algorithm,
    pub n_workers: usize,
    pub iterations: u64,
    pub time_per_iteration: f64,
    pub total_time: f64,
    /// Baseline time per iteration over this run's.
    pub speedup: f64,
    pub final_train_loss: f64,
    pub final_val_error: Option<f64>,
    /// This run minus the baseline.
    pub delta_train_loss: f64,
    pub delta_val_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline: String,
    /// Sorted by label.
    pub rows: Vec<ComparisonRow>,
}

/// Loads completed runs and compares them against the slowest one (by
/// simulated time per iteration; ties go to the smallest label).
///
/// All runs must train the same model. Labels come from the run files; if
/// two runs share a label, directory names are used instead.
pub fn compare_runs(dirs: &[PathBuf]) -> Result<Comparison, HarnessError> {
    if dirs.is_empty() {
        return Err(HarnessError::Mismatch("no runs to compare".into()));
    }
    let runs = dirs
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>, _>>()?;
    compare_loaded(&runs)
}

pub fn compare_loaded(runs: &[LoadedRun]) -> Result<Comparison, HarnessError> {
    let first = &runs[0].file.meta;
    for run in runs {
        let m = &run.file.meta;
        if m.model_kind != first.model_kind || m.model_dimension != first.model_dimension {
            return Err(HarnessError::Mismatch(format!(
                "{} trains a {} model with {} parameters, {} trains a {} model with {}",
                runs[0].dir.display(),
                first.model_kind,
                first.model_dimension,
                run.dir.display(),
                m.model_kind,
                m.model_dimension
            )));
        }
    }
    let labels: Vec<String> = runs.iter().map(|r| r.file.label.clone()).collect();
    let unique: BTreeSet<&String> = labels.iter().collect();
    let labels: Vec<String> = if unique.len() == labels.len() {
        labels
    } else {
        runs.iter().map(|r| r.dir.display().to_string()).collect()
    };

    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| labels[a].cmp(&labels[b]));
    let tpi = |i: usize| runs[i].file.summary.time_per_iteration;
    let base = *order
        .iter()
        .max_by(|&&a, &&b| tpi(a).total_cmp(&tpi(b)).then(labels[b].cmp(&labels[a])))
        .expect("non-empty");
    let bs = &runs[base].file.summary;
    let rows = order
        .iter()
        .map(|&i| {
            let s = &runs[i].file.summary;
            ComparisonRow {
                label: labels[i].clone(),
                algorithm: runs[i].file.meta.algorithm,
                n_workers: runs[i].file.meta.n_workers,
                iterations: s.completed_iterations,
                time_per_iteration: s.time_per_iteration,
                total_time: s.total_simulated_time,
                speedup: bs.time_per_iteration / s.time_per_iteration,
                final_train_loss: s.final_train_loss,
                final_val_error: s.final_val_error,
                delta_train_loss: s.final_train_loss - bs.final_train_loss,
                delta_val_error: s
                    .final_val_error
                    .zip(bs.final_val_error)
                    .map(|(a, b)| a - b),
            }
        })
        .collect();
    Ok(Comparison {
        baseline: labels[base].clone(),
        rows,
    })
}

impl Comparison {
    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| HarnessError::Serialize(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| HarnessError::Serialize(e.to_string()))
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let header = [
            "label",
            "algorithm",
            "N",
            "iters",
            "t/iter",
            "speedup",
            "train_loss",
            "val_error",
            "d_loss",
            "d_val_err",
        ];
        let body: Vec<[String; 10]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    r.algorithm.to_string(),
                    r.n_workers.to_string(),
                    r.iterations.to_string(),
                    format!("{:.4}", r.time_per_iteration),
                    format!("{:.3}", r.speedup),
                    format!("{:.5}", r.final_train_loss),
                    opt(r.final_val_error),
                    format!("{:+.5}", r.delta_train_loss),
                    r.delta_val_error.map_or("-".into(), |v| format!("{v:+.4}")),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
            let parts: Vec<String> = cells
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &mut header.iter().copied());
        for row in &body {
            line(&mut out, &mut row.iter().map(String::as_str));
        }
        let _ = writeln!(out, "baseline: {}", self.baseline);
        out
    }
}
