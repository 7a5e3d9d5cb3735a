use std::collections::BTreeMap;
use std::fs;

use serde::{Deserialize, Serialize};

use super::report::{write_cell, write_reports, CellLog};
use super::{HarnessError, RunManifest};
use crate::acquisition::AcquisitionStrategy;
use crate::al_loop::{aggregate_runs, run_replicas, ExperimentConfig};
use crate::embeddings::{read_dataset, Dataset};
use crate::oracle::now_millis;

/// Wall-clock data lives here, apart from the logs, so repeated sweeps
/// produce byte-identical cell files and reports.
pub const HEADER_FILE: &str = "header.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub strategy: AcquisitionStrategy,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub cells: Vec<CellLog>,
    pub failures: Vec<CellFailure>,
}

#[derive(Serialize)]
struct Header {
    generated_at_ms: u64,
    dataset: String,
    /// cell -> run -> per-record milliseconds
    timings_ms: BTreeMap<String, Vec<Vec<u128>>>,
}

/// Runs every replica of one cell and aggregates them.
pub fn run_cell(
    dataset: &Dataset,
    base: &ExperimentConfig,
    strategy: AcquisitionStrategy,
    parallel: bool,
) -> Result<CellLog, HarnessError> {
    let config = ExperimentConfig {
        strategy,
        ..base.clone()
    };
    let runs = run_replicas(dataset, &config, parallel)?;
    let summary = aggregate_runs(&runs)?;
    Ok(CellLog {
        strategy,
        config,
        runs,
        summary,
    })
}

/// Executes every (strategy, mode) cell of the manifest, writing one log per
/// cell plus the curve / table / summary reports. A failing cell is listed
/// in the report and does not affect the others.
pub fn run_sweep(manifest: &RunManifest) -> Result<SweepReport, HarnessError> {
    manifest.validate()?;
    let dataset = read_dataset(&manifest.dataset)?;
    let out = &manifest.output;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    let mut timings = BTreeMap::new();
    for &mode in &manifest.modes {
        for &rule in &manifest.strategies {
            let strategy = AcquisitionStrategy::new(rule, mode);
            log::info!("running cell {strategy}");
            match run_cell(&dataset, &manifest.experiment, strategy, manifest.parallel) {
                Ok(cell) => {
                    write_cell(out, &cell)?;
                    timings.insert(
                        strategy.to_string(),
                        cell.runs
                            .iter()
                            .map(|r| r.durations.iter().map(|d| d.as_millis()).collect())
                            .collect(),
                    );
                    cells.push(cell);
                }
                Err(e) => {
                    log::warn!("cell {strategy} failed: {e}");
                    failures.push(CellFailure {
                        strategy,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    write_reports(out, &cells, &failures)?;
    let header = Header {
        generated_at_ms: now_millis(),
        dataset: manifest.dataset.display().to_string(),
        timings_ms: timings,
    };
    let path = out.join(HEADER_FILE);
    let json = serde_json::to_vec_pretty(&header).map_err(|e| HarnessError::Report(e.to_string()))?;
    fs::write(&path, json).map_err(|e| HarnessError::io(&path, e))?;
    Ok(SweepReport { cells, failures })
}
