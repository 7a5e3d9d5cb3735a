use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AdamParams, AdamState, ClassifierError, Gradients, LinearClassifier};
use crate::rng::seeded;
use crate::ClassId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Mini-batch size; sets smaller than this train as one full batch.
    pub batch_size: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.epochs == 0 {
            return Err(ClassifierError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ClassifierError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ClassifierError::InvalidConfig("learning_rate must be > 0".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            ..AdamParams::default()
        }
    }
}

/// Trains a fresh zero-initialized probe on `(vectors, labels)`.
///
/// Each epoch reshuffles the rows with a generator seeded from `cfg.seed`
/// and takes one Adam step per mini-batch. Bit-for-bit deterministic for a
/// fixed config.
pub fn train(
    vectors: ArrayView2<'_, f32>,
    labels: &[ClassId],
    classes: usize,
    cfg: &TrainConfig,
) -> Result<LinearClassifier, ClassifierError> {
    cfg.validate()?;
    let dim = vectors.ncols();
    let mut clf = LinearClassifier::zeros(classes, dim);
    clf.check_batch(vectors, labels)?;

    let mut adam = AdamState::new(classes, dim, cfg.adam());
    let mut grads = Gradients::zeros(classes, dim);
    let mut probs = vec![0.0; classes];
    let mut order: Vec<usize> = (0..vectors.nrows()).collect();
    let mut rng = seeded(cfg.seed);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            clf.accumulate(vectors, labels, batch, &mut grads, &mut probs);
            adam.step(&mut clf, &grads)?;
        }
        if !clf.is_finite() {
            return Err(ClassifierError::NonFinite { epoch });
        }
    }
    Ok(clf)
}
