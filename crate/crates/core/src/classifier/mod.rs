//! Linear softmax probe trained with Adam on frozen embeddings.

mod adam;
mod checkpoint;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use thiserror::Error;

use crate::ClassId;

pub use adam::{adam_step, AdamParams, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use train::{train, TrainConfig};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("{labels} labels for {rows} rows")]
    LabelCount { rows: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: ClassId, classes: usize },
    #[error("parameters became non-finite during epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

/// `softmax(W x + b)` with `W` of shape `K x m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    weights: Array2<f64>,
    bias: Array1<f64>,
}

/// Parameter-shaped gradient (or moment) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Gradients {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            weights: Array2::zeros((classes, dim)),
            bias: Array1::zeros(classes),
        }
    }

    fn clear(&mut self) {
        self.weights.fill(0.0);
        self.bias.fill(0.0);
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// In-place softmax with max subtraction.
pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in logits.iter_mut() {
        *z /= sum;
    }
}

impl LinearClassifier {
    /// Zero-initialized probe.
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            weights: Array2::zeros((classes, dim)),
            bias: Array1::zeros(classes),
        }
    }

    pub fn from_parts(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self, ClassifierError> {
        if weights.nrows() != bias.len() {
            return Err(ClassifierError::DimensionMismatch {
                expected: weights.nrows(),
                got: bias.len(),
            });
        }
        Ok(Self {
            weights: weights.as_standard_layout().into_owned(),
            bias,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn bias(&self) -> ArrayView1<'_, f64> {
        self.bias.view()
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Array2<f64>, &mut Array1<f64>) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }

    fn check_dim(&self, got: usize) -> Result<(), ClassifierError> {
        if got != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Writes `W x + b` into `out` (length K). `x` must have length m.
    fn logits_into(&self, x: ArrayView1<'_, f32>, out: &mut [f64]) {
        let w = self.weights.as_slice().expect("standard layout");
        let m = self.dim();
        match x.as_slice() {
            Some(xs) => {
                for (k, o) in out.iter_mut().enumerate() {
                    let row = &w[k * m..(k + 1) * m];
                    *o = self.bias[k] + row.iter().zip(xs).map(|(&a, &b)| a * f64::from(b)).sum::<f64>();
                }
            }
            None => {
                for (k, o) in out.iter_mut().enumerate() {
                    let row = &w[k * m..(k + 1) * m];
                    *o = self.bias[k] + row.iter().zip(x.iter()).map(|(&a, &b)| a * f64::from(b)).sum::<f64>();
                }
            }
        }
    }

    /// Class probabilities for one embedding.
    pub fn forward(&self, x: ArrayView1<'_, f32>) -> Result<Array1<f64>, ClassifierError> {
        self.check_dim(x.len())?;
        let mut out = vec![0.0; self.num_classes()];
        self.logits_into(x, &mut out);
        softmax_in_place(&mut out);
        Ok(Array1::from(out))
    }

    /// Row-wise [`forward`](Self::forward) over an `n x m` matrix.
    pub fn predict_batch(&self, vectors: ArrayView2<'_, f32>) -> Result<Array2<f64>, ClassifierError> {
        self.check_dim(vectors.ncols())?;
        let k = self.num_classes();
        let mut out = Array2::zeros((vectors.nrows(), k));
        for (x, mut row) in vectors.rows().into_iter().zip(out.rows_mut()) {
            let row = row.as_slice_mut().expect("standard layout");
            self.logits_into(x, row);
            softmax_in_place(row);
        }
        Ok(out)
    }

    /// Fraction of rows whose argmax (lowest-id tie-break) equals the label.
    pub fn evaluate(&self, vectors: ArrayView2<'_, f32>, labels: &[ClassId]) -> Result<f64, ClassifierError> {
        if vectors.nrows() == 0 {
            return Err(ClassifierError::EmptyBatch);
        }
        if labels.len() != vectors.nrows() {
            return Err(ClassifierError::LabelCount {
                rows: vectors.nrows(),
                labels: labels.len(),
            });
        }
        let probs = self.predict_batch(vectors)?;
        let correct = probs
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(p, &y)| argmax(p.as_slice().expect("standard layout")) == usize::from(y))
            .count();
        Ok(correct as f64 / labels.len() as f64)
    }

    fn check_batch(&self, vectors: ArrayView2<'_, f32>, labels: &[ClassId]) -> Result<(), ClassifierError> {
        if vectors.nrows() == 0 {
            return Err(ClassifierError::EmptyBatch);
        }
        self.check_dim(vectors.ncols())?;
        if labels.len() != vectors.nrows() {
            return Err(ClassifierError::LabelCount {
                rows: vectors.nrows(),
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| usize::from(l) >= self.num_classes()) {
            return Err(ClassifierError::LabelOutOfRange {
                label,
                classes: self.num_classes(),
            });
        }
        Ok(())
    }

    /// Mean cross-entropy over the rows in `rows` and its gradient, written
    /// into `grads` (overwritten). Row k of the weight gradient for one
    /// sample is `(p_k - 1{k = y}) x`.
    fn accumulate(
        &self,
        vectors: ArrayView2<'_, f32>,
        labels: &[ClassId],
        rows: &[usize],
        grads: &mut Gradients,
        probs: &mut [f64],
    ) -> f64 {
        grads.clear();
        let m = self.dim();
        let gw = grads.weights.as_slice_mut().expect("standard layout");
        let mut loss = 0.0;
        for &i in rows {
            let x = vectors.row(i);
            self.logits_into(x, probs);
            softmax_in_place(probs);
            let y = usize::from(labels[i]);
            loss -= probs[y].max(f64::MIN_POSITIVE).ln();
            for (k, &p) in probs.iter().enumerate() {
                let delta = if k == y { p - 1.0 } else { p };
                grads.bias[k] += delta;
                let row = &mut gw[k * m..(k + 1) * m];
                for (g, &xv) in row.iter_mut().zip(x.iter()) {
                    *g += delta * f64::from(xv);
                }
            }
        }
        let scale = 1.0 / rows.len() as f64;
        gw.iter_mut().for_each(|g| *g *= scale);
        grads.bias.mapv_inplace(|g| g * scale);
        loss * scale
    }

    /// Mean categorical cross-entropy of the batch and its gradient with
    /// respect to `(W, b)`.
    pub fn loss_and_grad(
        &self,
        vectors: ArrayView2<'_, f32>,
        labels: &[ClassId],
    ) -> Result<(f64, Gradients), ClassifierError> {
        self.check_batch(vectors, labels)?;
        let rows: Vec<usize> = (0..vectors.nrows()).collect();
        let mut grads = Gradients::zeros(self.num_classes(), self.dim());
        let mut probs = vec![0.0; self.num_classes()];
        let loss = self.accumulate(vectors, labels, &rows, &mut grads, &mut probs);
        Ok((loss, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn with_logits(logits: &[f64]) -> LinearClassifier {
        // W = 0 with bias = logits gives Wx + b = logits for any x
        LinearClassifier::from_parts(Array2::zeros((logits.len(), 1)), Array1::from(logits.to_vec())).unwrap()
    }

    #[test]
    fn zero_parameters_give_uniform() {
        let clf = LinearClassifier::zeros(3, 4);
        let p = clf.forward(array![1.0f32, -2.0, 3.0, 0.5].view()).unwrap();
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shift_invariance_of_logits() {
        let x = array![0.0f32];
        let a = with_logits(&[1.0, 2.0, 3.0]).forward(x.view()).unwrap();
        let b = with_logits(&[11.0, 12.0, 13.0]).forward(x.view()).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_two_class() {
        let l3 = 3f64.ln();
        let p = with_logits(&[l3, -l3]).forward(array![0.0f32].view()).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-12);
        assert!((p[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let p = with_logits(&[1000.0, 999.0]).forward(array![0.0f32].view()).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let clf = LinearClassifier::zeros(2, 3);
        assert!(matches!(
            clf.forward(array![1.0f32].view()),
            Err(ClassifierError::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn uniform_loss_is_ln_k() {
        let clf = LinearClassifier::zeros(4, 2);
        let (loss, _) = clf
            .loss_and_grad(array![[1.0f32, 2.0], [3.0, -1.0]].view(), &[0, 3])
            .unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_has_near_zero_loss() {
        let clf = with_logits(&[50.0, 0.0, 0.0]);
        let (loss, grads) = clf.loss_and_grad(array![[0.0f32]].view(), &[0]).unwrap();
        assert!(loss < 1e-20);
        assert!(grads.bias.iter().all(|g| g.abs() < 1e-20));
    }

    #[test]
    fn empty_batch_rejected() {
        let clf = LinearClassifier::zeros(2, 2);
        let empty = Array2::<f32>::zeros((0, 2));
        assert!(matches!(clf.loss_and_grad(empty.view(), &[]), Err(ClassifierError::EmptyBatch)));
        assert!(matches!(clf.evaluate(empty.view(), &[]), Err(ClassifierError::EmptyBatch)));
    }

    #[test]
    fn predict_batch_empty_and_rowwise() {
        let clf = LinearClassifier::from_parts(array![[1.0, -1.0], [0.5, 2.0], [0.0, 0.3]], array![0.1, 0.0, -0.2]).unwrap();
        assert_eq!(clf.predict_batch(Array2::<f32>::zeros((0, 2)).view()).unwrap().nrows(), 0);
        let x = array![[1.0f32, 2.0], [-3.0, 0.5], [0.0, 0.0]];
        let batch = clf.predict_batch(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            assert_eq!(batch.row(i), clf.forward(row).unwrap());
        }
        let permuted = array![[0.0f32, 0.0], [1.0, 2.0], [-3.0, 0.5]];
        let pb = clf.predict_batch(permuted.view()).unwrap();
        assert_eq!(pb.row(0), batch.row(2));
        assert_eq!(pb.row(1), batch.row(0));
        assert_eq!(pb.row(2), batch.row(1));
    }

    #[test]
    fn evaluate_tie_break_and_fractions() {
        let x = array![[1.0f32], [2.0], [3.0], [4.0]];
        // zero probe: every prediction ties and resolves to class 0
        let zero = LinearClassifier::zeros(3, 1);
        assert_eq!(zero.evaluate(x.view(), &[0, 1, 2, 0]).unwrap(), 0.5);
        assert_eq!(zero.evaluate(x.view(), &[0, 0, 0, 0]).unwrap(), 1.0);
        assert_eq!(zero.evaluate(x.view(), &[1, 1, 0, 2]).unwrap(), 0.25);
    }

    #[test]
    fn argmax_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    proptest! {
        #[test]
        fn softmax_normalized_and_shift_invariant(
            logits in prop::collection::vec(-30.0f64..30.0, 2..12),
            shift in -100.0f64..100.0,
        ) {
            let x = array![0.0f32];
            let p = with_logits(&logits).forward(x.view()).unwrap();
            prop_assert!((p.sum() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let q = with_logits(&shifted).forward(x.view()).unwrap();
            for (a, b) in p.iter().zip(q.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
