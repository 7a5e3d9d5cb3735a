use aloe_core::al_loop::AlError;
use aloe_core::classifier::ClassifierError;
use aloe_core::embeddings::DatasetError;
use aloe_core::harness::HarnessError;
use aloe_core::oracle::snapshot::SnapshotError;
use thiserror::Error;

/// Top-level failure, classified by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad manifest, inconsistent configuration.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, corrupt or unsuitable input data.
    #[error("{0}")]
    Data(String),
    /// Anything that went wrong while computing or serving.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            ClassifierError::Io(_) | ClassifierError::Checkpoint(_) => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<AlError> for CliError {
    fn from(e: AlError) -> Self {
        let msg = e.to_string();
        match innermost(&e) {
            AlError::Config(_) => CliError::Usage(msg),
            AlError::Dataset(_) | AlError::InsufficientSeeds { .. } => CliError::Data(msg),
            AlError::Classifier(ClassifierError::InvalidConfig(_)) => CliError::Usage(msg),
            _ => CliError::Runtime(msg),
        }
    }
}

fn innermost(e: &AlError) -> &AlError {
    match e {
        AlError::Run { source, .. } => innermost(source),
        other => other,
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Manifest(_) => CliError::Usage(e.to_string()),
            HarnessError::Dataset(_) => CliError::Data(e.to_string()),
            HarnessError::Io { .. } | HarnessError::Report(_) => CliError::Runtime(e.to_string()),
            HarnessError::Classifier(c) => c.into(),
            HarnessError::Al(a) => a.into(),
        }
    }
}

impl From<SnapshotError> for CliError {
    fn from(e: SnapshotError) -> Self {
        match e {
            SnapshotError::Io(_) => CliError::Runtime(e.to_string()),
            SnapshotError::Corrupt { .. } | SnapshotError::Mismatch(_) => {
                CliError::Data(format!("refusing to resume: {e}"))
            }
        }
    }
}
