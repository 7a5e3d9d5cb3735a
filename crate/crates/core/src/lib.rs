//! Pool-based active learning over frozen embedding vectors.
//!
//! The cycle implemented here: train a linear softmax probe on the labeled
//! set, score the unlabeled pool with an uncertainty rule, ask an oracle for
//! the selected labels, merge them, retrain. Embeddings always arrive
//! precomputed (see [`embeddings`]); the encoder that produced them is never
//! touched.
//!
//! Module map:
//! - [`embeddings`]: dataset model, binary format, CSV import, synthetic clusters
//! - [`classifier`]: softmax probe, cross-entropy gradients, Adam, training
//! - [`acquisition`]: uncertainty scores and class-aware / class-agnostic selection
//! - [`al_loop`]: seeding, rounds, experiments, aggregation
//! - [`oracle`]: simulated ground-truth oracle, human labeling queue, snapshots
//! - [`harness`]: full-data baseline, manifests, sweeps and reports

pub mod acquisition;
pub mod al_loop;
pub mod classifier;
pub mod embeddings;
pub mod harness;
pub mod oracle;
pub mod rng;

pub use acquisition::{AcquisitionStrategy, Mode, Rule, ScoredPool, Selection};
pub use al_loop::{
    aggregate_runs, run_experiment, run_replicas, run_round, seed_initial, AlError, AlState,
    ExperimentConfig, ExperimentLog, ExperimentSummary, PlateauRule, RoundOutcome, RoundRecord,
};
pub use classifier::{AdamState, ClassifierError, Gradients, LinearClassifier, TrainConfig};
pub use embeddings::{Dataset, DatasetError, Split, SyntheticSpec};
pub use oracle::{LabelAnswer, LabelQuery, Oracle, OracleError, SimulatedOracle};

/// Row index of a sample within its [`Dataset`].
pub type SampleId = usize;

/// Index into [`Dataset::classes`].
pub type ClassId = u16;
