//! Curve and table emission. Everything here is a pure function of the
//! cell logs, so re-rendering never changes a number.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sweep::CellFailure;
use super::HarnessError;
use crate::acquisition::AcquisitionStrategy;
use crate::al_loop::{ExperimentConfig, ExperimentLog, ExperimentSummary, MeanStd};

pub const CELLS_DIR: &str = "cells";

/// All replicas of one (strategy, mode) cell plus their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLog {
    pub strategy: AcquisitionStrategy,
    pub config: ExperimentConfig,
    pub runs: Vec<ExperimentLog>,
    pub summary: ExperimentSummary,
}

impl CellLog {
    pub fn file_name(&self) -> String {
        format!("{}__{}.json", self.strategy.rule, self.strategy.mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub strategy: AcquisitionStrategy,
    pub test_accuracy: String,
    pub summary: ExperimentSummary,
}

/// Percent mean with one decimal and percent std with two: `99.2±0.06`.
pub fn format_cell(stat: MeanStd) -> String {
    format!("{:.1}±{:.2}", stat.mean * 100.0, stat.std * 100.0)
}

/// Integer when every run agrees, two decimals otherwise.
fn format_labels(stat: MeanStd) -> String {
    if stat.std == 0.0 && stat.mean.fract() == 0.0 {
        format!("{}", stat.mean as u64)
    } else {
        format!("{:.2}", stat.mean)
    }
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).map_err(|e| HarnessError::Report(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| HarnessError::Report(e.to_string()))
}

/// Per-round curve: one row per (cell, round).
pub fn curve_csv(cells: &[CellLog]) -> Result<String, HarnessError> {
    let mut rows = vec![["rule", "mode", "round", "cumulative_labels", "mean_val_acc", "std_val_acc"]
        .map(String::from)
        .to_vec()];
    for cell in cells {
        for r in &cell.summary.rounds {
            rows.push(vec![
                cell.strategy.rule.to_string(),
                cell.strategy.mode.to_string(),
                r.round.to_string(),
                format_labels(r.cumulative_labels),
                format!("{:.6}", r.val_accuracy.mean),
                format!("{:.6}", r.val_accuracy.std),
            ]);
        }
    }
    csv_string(rows)
}

/// Final test accuracy per cell, rendered as `mean±std` percentages.
pub fn final_table_csv(cells: &[CellLog]) -> Result<String, HarnessError> {
    let mut rows = vec![[
        "rule",
        "mode",
        "runs",
        "labels",
        "test_accuracy",
        "mean_test_acc",
        "std_test_acc",
    ]
    .map(String::from)
    .to_vec()];
    for cell in cells {
        let s = &cell.summary;
        rows.push(vec![
            cell.strategy.rule.to_string(),
            cell.strategy.mode.to_string(),
            s.runs.to_string(),
            format_labels(s.total_labels),
            format_cell(s.final_test_accuracy),
            format!("{:.6}", s.final_test_accuracy.mean),
            format!("{:.6}", s.final_test_accuracy.std),
        ]);
    }
    csv_string(rows)
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    cells: Vec<CellSummary>,
    failures: &'a [CellFailure],
}

pub fn summary_json(cells: &[CellLog], failures: &[CellFailure]) -> Result<String, HarnessError> {
    let doc = SummaryDoc {
        cells: cells
            .iter()
            .map(|c| CellSummary {
                strategy: c.strategy,
                test_accuracy: format_cell(c.summary.final_test_accuracy),
                summary: c.summary.clone(),
            })
            .collect(),
        failures,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| HarnessError::Report(e.to_string()))
}

fn write(path: PathBuf, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))
}

/// Writes `curves.csv`, `final_table.csv` and `summary.json` into `dir`.
/// Cells are emitted in (mode, rule) order whatever order they arrive in.
pub fn write_reports(dir: impl AsRef<Path>, cells: &[CellLog], failures: &[CellFailure]) -> Result<(), HarnessError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut sorted = cells.to_vec();
    sorted.sort_by_key(|c| (c.strategy.mode, c.strategy.rule));
    let cells = &sorted[..];
    write(dir.join("curves.csv"), curve_csv(cells)?.as_bytes())?;
    write(dir.join("final_table.csv"), final_table_csv(cells)?.as_bytes())?;
    write(dir.join("summary.json"), summary_json(cells, failures)?.as_bytes())?;
    Ok(())
}

pub fn write_cell(dir: &Path, cell: &CellLog) -> Result<PathBuf, HarnessError> {
    let cells = dir.join(CELLS_DIR);
    fs::create_dir_all(&cells).map_err(|e| HarnessError::io(&cells, e))?;
    let path = cells.join(cell.file_name());
    let json = serde_json::to_vec_pretty(cell).map_err(|e| HarnessError::Report(e.to_string()))?;
    write(path.clone(), &json)?;
    Ok(path)
}

/// Reads every cell log under `dir/cells`, ordered by file name.
pub fn read_cell_logs(dir: impl AsRef<Path>) -> Result<Vec<CellLog>, HarnessError> {
    let cells = dir.as_ref().join(CELLS_DIR);
    let mut paths: Vec<PathBuf> = fs::read_dir(&cells)
        .map_err(|e| HarnessError::io(&cells, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p).map_err(|e| HarnessError::io(&p, e))?;
            serde_json::from_slice(&bytes).map_err(|e| HarnessError::Report(format!("{}: {e}", p.display())))
        })
        .collect()
}
