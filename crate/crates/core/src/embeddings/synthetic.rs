//! Gaussian-cluster stand-in for encoder embeddings.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, Split};
use crate::rng::{seeded, ExperimentRng};
use crate::ClassId;

/// Parameters of a synthetic clustered dataset.
///
/// Each class is an isotropic unit-variance Gaussian. Class means sit on a
/// sphere whose radius is chosen so the closest pair of means is exactly
/// `separation` apart, which makes `separation` the single difficulty knob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    /// Samples per class in each of the three splits.
    pub per_class: usize,
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |field, reason: &str| {
            Err(DatasetError::InvalidSpec {
                field,
                reason: reason.to_owned(),
            })
        };
        if self.classes < 2 {
            return invalid("classes", "must be >= 2");
        }
        if self.classes > usize::from(ClassId::MAX) + 1 {
            return invalid("classes", "exceeds the label width");
        }
        if self.dim == 0 {
            return invalid("dim", "must be >= 1");
        }
        if self.dim == 1 && self.classes > 2 {
            return invalid("dim", "a 1-dimensional sphere holds at most 2 distinct means");
        }
        if self.per_class == 0 {
            return invalid("per_class", "must be >= 1");
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return invalid("separation", "must be a finite value > 0");
        }
        Ok(())
    }
}

const MEAN_ATTEMPTS: usize = 64;

fn unit_directions(spec: &SyntheticSpec, rng: &mut ExperimentRng) -> Result<Vec<Vec<f64>>, DatasetError> {
    for _ in 0..MEAN_ATTEMPTS {
        let dirs: Vec<Vec<f64>> = (0..spec.classes)
            .map(|_| loop {
                let v: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    break v.into_iter().map(|x| x / norm).collect();
                }
            })
            .collect();
        if min_pairwise_distance(&dirs) > 1e-6 {
            return Ok(dirs);
        }
    }
    Err(DatasetError::InvalidSpec {
        field: "dim",
        reason: "could not place distinct class means".into(),
    })
}

pub(crate) fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Class means for `spec`, scaled so the minimum pairwise distance equals
/// `spec.separation`.
pub(crate) fn class_means(spec: &SyntheticSpec, rng: &mut ExperimentRng) -> Result<Vec<Vec<f64>>, DatasetError> {
    let dirs = unit_directions(spec, rng)?;
    let radius = spec.separation / min_pairwise_distance(&dirs);
    Ok(dirs
        .into_iter()
        .map(|d| d.into_iter().map(|x| x * radius).collect())
        .collect())
}

/// Generates a fully labeled dataset with `per_class` samples per class in
/// each split. Rows are grouped by split (train, validation, test) and
/// shuffled within each split. Pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset, DatasetError> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let means = class_means(spec, &mut rng)?;

    let per_split = spec.classes * spec.per_class;
    let n = per_split * Split::ALL.len();
    let mut values = Vec::with_capacity(n * spec.dim);
    let mut splits = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);

    for split in Split::ALL {
        let mut order: Vec<ClassId> = (0..spec.classes)
            .flat_map(|c| std::iter::repeat_n(c as ClassId, spec.per_class))
            .collect();
        order.shuffle(&mut rng);
        for class in order {
            let mean = &means[usize::from(class)];
            values.extend(mean.iter().map(|&mu| {
                let z: f64 = rng.sample(StandardNormal);
                (mu + z) as f32
            }));
            splits.push(split);
            labels.push(class);
        }
    }

    let vectors = Array2::from_shape_vec((n, spec.dim), values).map_err(|e| DatasetError::Shape(e.to_string()))?;
    let classes = (0..spec.classes).map(|c| format!("class_{c}")).collect();
    Dataset::new(vectors, splits, Some(labels), classes, None)
}
