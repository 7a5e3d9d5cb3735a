//! Experiment driving: full-data baseline, manifests, sweeps and reports.

mod manifest;
mod report;
mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::al_loop::AlError;
use crate::classifier::{self, ClassifierError, LinearClassifier, TrainConfig};
use crate::embeddings::{Dataset, DatasetError, Split};

pub use manifest::{Profile, RunManifest};
pub use report::{
    curve_csv, final_table_csv, format_cell, read_cell_logs, summary_json, write_cell, write_reports, CellLog,
    CellSummary,
};
pub use sweep::{run_cell, run_sweep, CellFailure, SweepReport, HEADER_FILE};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Al(#[from] AlError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("report: {0}")]
    Report(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub train_size: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

/// Trains one probe on the entire labeled train split: the upper bound the
/// active-learning curves are compared against.
pub fn baseline_full_data(
    dataset: &Dataset,
    train_cfg: &TrainConfig,
) -> Result<(LinearClassifier, BaselineResult), HarnessError> {
    if !dataset.has_labels() {
        return Err(DatasetError::MissingLabels.into());
    }
    dataset.require_splits()?;
    let eval = |clf: &LinearClassifier, split| -> Result<f64, HarnessError> {
        let ids = dataset.ids_in(split);
        Ok(clf.evaluate(dataset.gather(&ids).view(), &dataset.labels_for(&ids)?)?)
    };
    let train_ids = dataset.ids_in(Split::Train);
    let clf = classifier::train(
        dataset.gather(&train_ids).view(),
        &dataset.labels_for(&train_ids)?,
        dataset.num_classes(),
        train_cfg,
    )?;
    let result = BaselineResult {
        train_size: train_ids.len(),
        train_accuracy: eval(&clf, Split::Train)?,
        val_accuracy: eval(&clf, Split::Validation)?,
        test_accuracy: eval(&clf, Split::Test)?,
    };
    Ok((clf, result))
}
