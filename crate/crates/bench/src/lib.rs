//! Shared fixtures for the benchmarks.

use aloe_core::embeddings::generate_synthetic;
use aloe_core::rng::seeded;
use aloe_core::{ClassId, Dataset, SyntheticSpec};
use rand::Rng;

/// The reference dataset shape (K=6, m=32) at a chosen size.
pub fn reference(per_class: usize) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        classes: 6,
        dim: 32,
        per_class,
        separation: 3.0,
        seed: 1,
    })
    .expect("valid spec")
}

/// `rows` random probability vectors over `classes` classes, row-major.
pub fn probabilities(rows: usize, classes: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(rows * classes);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..classes).map(|_| rng.random::<f64>() + 1e-3).collect();
        let sum: f64 = raw.iter().sum();
        out.extend(raw.iter().map(|v| v / sum));
    }
    out
}

/// First `n` train ids with their labels.
pub fn labeled_subset(d: &Dataset, n: usize) -> (Vec<usize>, Vec<ClassId>) {
    let ids: Vec<usize> = d.ids_in(aloe_core::Split::Train).into_iter().take(n).collect();
    let labels = d.labels_for(&ids).expect("labeled");
    (ids, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_distributions() {
        let p = probabilities(10, 4, 1);
        for row in p.chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
