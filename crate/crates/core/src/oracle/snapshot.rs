//! Resumable experiment state for the human-oracle service.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::al_loop::{AlState, ExperimentConfig};
use crate::embeddings::Dataset;

pub const SNAPSHOT_VERSION: u32 = 1;
pub const SNAPSHOT_FILE: &str = "state.json";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt snapshot {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("snapshot does not match this experiment: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub dataset_fingerprint: String,
    pub config: ExperimentConfig,
    pub state: AlState,
    pub final_test_accuracy: Option<f64>,
}

impl Snapshot {
    pub fn new(dataset: &Dataset, config: &ExperimentConfig, state: &AlState) -> Self {
        Self {
            version: SNAPSHOT_VERSION,
            dataset_fingerprint: dataset.fingerprint(),
            config: config.clone(),
            state: state.clone(),
            final_test_accuracy: None,
        }
    }

    /// Refuses to resume against a different dataset or configuration.
    pub fn check_compatible(&self, dataset: &Dataset, config: &ExperimentConfig) -> Result<(), SnapshotError> {
        if self.dataset_fingerprint != dataset.fingerprint() {
            return Err(SnapshotError::Mismatch("dataset fingerprint differs".into()));
        }
        if self.config.strategy != config.strategy || self.config.seeds_per_class != config.seeds_per_class {
            return Err(SnapshotError::Mismatch(format!(
                "snapshot was taken with strategy {} and {} seeds per class",
                self.config.strategy, self.config.seeds_per_class
            )));
        }
        self.state
            .check_invariants(dataset)
            .map_err(SnapshotError::Mismatch)
    }
}

/// Writes `snapshot` to `dir/state.json` via a temporary file and rename,
/// so a crash never leaves a half-written snapshot behind.
pub fn write_snapshot(dir: impl AsRef<Path>, snapshot: &Snapshot) -> Result<PathBuf, SnapshotError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let target = dir.join(SNAPSHOT_FILE);
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    let bytes = serde_json::to_vec_pretty(snapshot).map_err(|e| SnapshotError::Corrupt {
        path: target.clone(),
        reason: e.to_string(),
    })?;
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    Ok(target)
}

/// `Ok(None)` when no snapshot exists yet.
pub fn read_snapshot(dir: impl AsRef<Path>) -> Result<Option<Snapshot>, SnapshotError> {
    let path = dir.as_ref().join(SNAPSHOT_FILE);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let snapshot: Snapshot = serde_json::from_slice(&bytes).map_err(|e| SnapshotError::Corrupt {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if snapshot.version != SNAPSHOT_VERSION {
        return Err(SnapshotError::Corrupt {
            path,
            reason: format!("unsupported snapshot version {}", snapshot.version),
        });
    }
    Ok(Some(snapshot))
}
