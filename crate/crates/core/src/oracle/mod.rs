//! Label providers.
//!
//! [`SimulatedOracle`] answers from dataset ground truth for benchmarking.
//! [`HumanOracle`] parks each round's queries in a [`LabelQueue`] that an
//! annotation frontend drains over HTTP, and blocks until the whole batch is
//! answered.

mod human;
mod simulated;
pub mod snapshot;

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::Candidate;
use crate::embeddings::Metadata;
use crate::{ClassId, SampleId};

pub use human::{HumanOracle, LabelQueue, LabelRejection};
pub use simulated::SimulatedOracle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("sample {0} is already labeled")]
    AlreadyLabeled(SampleId),
    #[error("sample {0} is not in the train split")]
    NotTrain(SampleId),
    #[error("sample {0} does not exist")]
    UnknownId(SampleId),
    #[error("dataset has no ground-truth labels")]
    Unlabeled,
    #[error("round {round}: timed out with {answered}/{total} answers")]
    Timeout {
        round: usize,
        answered: usize,
        total: usize,
    },
    #[error("label queue closed")]
    Closed,
}

/// A request for one sample's label, as shown to an annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelQuery {
    pub id: SampleId,
    pub round: usize,
    /// Unix milliseconds.
    pub issued_at: u64,
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAnswer {
    pub id: SampleId,
    pub class_id: ClassId,
    pub annotator: String,
    /// Unix milliseconds.
    pub answered_at: u64,
}

/// Everything an oracle sees for one acquisition batch.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRequest {
    pub round: usize,
    pub queries: Vec<LabelQuery>,
    /// Scoring details of each query, parallel to `queries`; empty for the
    /// seed batch.
    pub selected: Vec<Candidate>,
    /// Remaining pool candidates, most uncertain first, used to replace
    /// skipped queries.
    pub backlog: Vec<Candidate>,
    pub class_aware: bool,
}

impl AnnotationRequest {
    pub fn ids(&self) -> Vec<SampleId> {
        self.queries.iter().map(|q| q.id).collect()
    }
}

pub trait Oracle {
    /// Labels for every query of the batch (or for its replacements when
    /// a query was skipped), in query order. On error nothing is charged.
    fn annotate(&mut self, request: &AnnotationRequest) -> Result<Vec<LabelAnswer>, OracleError>;

    /// Number of labels handed out so far.
    fn budget(&self) -> usize;
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
