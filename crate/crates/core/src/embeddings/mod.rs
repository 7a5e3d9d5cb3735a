//! Embedding datasets: in-memory model, binary file format, CSV ingestion and
//! synthetic Gaussian clusters.

mod csv_import;
mod format;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::{ClassId, SampleId};

pub use csv_import::import_csv;
pub use format::{read_dataset, write_dataset, FORMAT_VERSION, MAGIC};
pub use synthetic::{generate_synthetic, SyntheticSpec};

/// Free-form per-sample display data (audio URL, transcript hint, ...).
pub type Metadata = BTreeMap<String, String>;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not an ALOE dataset file")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload while reading {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("row {row}: label id {label} out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: ClassId,
        classes: usize,
    },
    #[error("row {row}: invalid split tag {tag}")]
    InvalidSplitTag { row: usize, tag: u8 },
    #[error("invalid UTF-8 in {0}")]
    InvalidUtf8(&'static str),
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("row {row}, column {col}: non-finite embedding value")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid synthetic spec: {field} {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("dataset has no {0} samples")]
    MissingSplit(Split),
    #[error("dataset has no ground-truth labels")]
    MissingLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn tag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Validation => 1,
            Split::Test => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Split> {
        match tag {
            0 => Some(Split::Train),
            1 => Some(Split::Validation),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "valid" | "val" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split tag {other:?}")),
        }
    }
}

/// `n` embedding rows of dimension `m` with split tags, optional labels and
/// optional display metadata. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    vectors: Array2<f32>,
    splits: Vec<Split>,
    labels: Option<Vec<ClassId>>,
    classes: Vec<String>,
    metadata: Option<Vec<Metadata>>,
}

impl Dataset {
    pub fn new(
        vectors: Array2<f32>,
        splits: Vec<Split>,
        labels: Option<Vec<ClassId>>,
        classes: Vec<String>,
        metadata: Option<Vec<Metadata>>,
    ) -> Result<Self, DatasetError> {
        let (n, m) = vectors.dim();
        if m == 0 {
            return Err(DatasetError::Shape("embedding dimension must be >= 1".into()));
        }
        if splits.len() != n {
            return Err(DatasetError::Shape(format!(
                "{} split tags for {n} rows",
                splits.len()
            )));
        }
        if classes.is_empty() {
            return Err(DatasetError::Shape("class list is empty".into()));
        }
        if classes.len() > usize::from(ClassId::MAX) + 1 {
            return Err(DatasetError::Shape(format!("{} classes exceed the label width", classes.len())));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(DatasetError::Shape(format!("{} labels for {n} rows", labels.len())));
            }
            if let Some((row, &label)) = labels
                .iter()
                .enumerate()
                .find(|(_, &l)| usize::from(l) >= classes.len())
            {
                return Err(DatasetError::LabelOutOfRange {
                    row,
                    label,
                    classes: classes.len(),
                });
            }
        }
        if let Some(meta) = &metadata {
            if meta.len() != n {
                return Err(DatasetError::Shape(format!("{} metadata objects for {n} rows", meta.len())));
            }
        }
        for ((row, col), v) in vectors.indexed_iter() {
            if !v.is_finite() {
                return Err(DatasetError::NonFinite { row, col });
            }
        }
        let vectors = if vectors.is_standard_layout() {
            vectors
        } else {
            vectors.as_standard_layout().into_owned()
        };
        Ok(Self {
            vectors,
            splits,
            labels,
            classes,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn vectors(&self) -> ArrayView2<'_, f32> {
        self.vectors.view()
    }

    pub fn row(&self, id: SampleId) -> ArrayView1<'_, f32> {
        self.vectors.row(id)
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn split(&self, id: SampleId) -> Split {
        self.splits[id]
    }

    pub fn labels(&self) -> Option<&[ClassId]> {
        self.labels.as_deref()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn label(&self, id: SampleId) -> Option<ClassId> {
        self.labels.as_ref().map(|l| l[id])
    }

    pub fn metadata(&self) -> Option<&[Metadata]> {
        self.metadata.as_deref()
    }

    pub fn metadata_for(&self, id: SampleId) -> Option<&Metadata> {
        self.metadata.as_ref().map(|m| &m[id])
    }

    /// Ids of every sample tagged `split`, ascending.
    pub fn ids_in(&self, split: Split) -> Vec<SampleId> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Copies the rows named by `ids` into a contiguous matrix.
    pub fn gather(&self, ids: &[SampleId]) -> Array2<f32> {
        let m = self.dim();
        let mut out = Array2::zeros((ids.len(), m));
        for (dst, &id) in out.rows_mut().into_iter().zip(ids) {
            let mut dst = dst;
            dst.assign(&self.vectors.row(id));
        }
        out
    }

    pub fn labels_for(&self, ids: &[SampleId]) -> Result<Vec<ClassId>, DatasetError> {
        let labels = self.labels.as_ref().ok_or(DatasetError::MissingLabels)?;
        Ok(ids.iter().map(|&id| labels[id]).collect())
    }

    /// Checks that the dataset can drive an experiment: all splits present.
    pub fn require_splits(&self) -> Result<(), DatasetError> {
        for split in Split::ALL {
            if !self.splits.contains(&split) {
                return Err(DatasetError::MissingSplit(split));
            }
        }
        Ok(())
    }

    /// Same rows under a new class list; existing labels must stay in range.
    /// Used to give an unlabeled import its annotation classes.
    pub fn with_classes(self, classes: Vec<String>) -> Result<Self, DatasetError> {
        Self::new(self.vectors, self.splits, self.labels, classes, self.metadata)
    }

    /// Stable content hash over shape, classes, splits and vectors.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        for c in &self.classes {
            h.update((c.len() as u64).to_le_bytes());
            h.update(c.as_bytes());
        }
        h.update(self.splits.iter().map(|s| s.tag()).collect::<Vec<_>>());
        for v in self.vectors.iter() {
            h.update(v.to_le_bytes());
        }
        if let Some(labels) = &self.labels {
            for l in labels {
                h.update(l.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> Dataset {
        Dataset::new(
            array![[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]],
            vec![Split::Train, Split::Validation, Split::Test],
            Some(vec![0, 1, 0]),
            vec!["a".into(), "b".into()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_label() {
        let err = Dataset::new(
            array![[0.0], [1.0]],
            vec![Split::Train; 2],
            Some(vec![0, 2]),
            vec!["a".into(), "b".into()],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::LabelOutOfRange { row: 1, label: 2, .. }));
    }

    #[test]
    fn rejects_non_finite() {
        let err = Dataset::new(
            array![[0.0, f32::NAN]],
            vec![Split::Train],
            None,
            vec!["a".into()],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::NonFinite { row: 0, col: 1 }));
    }

    #[test]
    fn split_lookup_and_gather() {
        let d = tiny();
        assert_eq!(d.ids_in(Split::Train), vec![0]);
        assert_eq!(d.ids_in(Split::Test), vec![2]);
        assert_eq!(d.gather(&[2, 0]), array![[4.0, 5.0], [0.0, 1.0]]);
        assert_eq!(d.labels_for(&[1, 2]).unwrap(), vec![1, 0]);
        d.require_splits().unwrap();
    }

    #[test]
    fn missing_split_is_reported() {
        let d = Dataset::new(array![[0.0]], vec![Split::Train], None, vec!["a".into()], None).unwrap();
        assert!(matches!(d.require_splits(), Err(DatasetError::MissingSplit(Split::Validation))));
    }

    #[test]
    fn split_strings() {
        assert_eq!("val".parse::<Split>().unwrap(), Split::Validation);
        assert!("holdout".parse::<Split>().is_err());
        assert_eq!(Split::Test.to_string(), "test");
    }
}
