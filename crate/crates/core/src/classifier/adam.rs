use serde::{Deserialize, Serialize};

use super::{ClassifierError, Gradients, LinearClassifier};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators shaped like the probe parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub params: AdamParams,
    pub step: u64,
    first: Gradients,
    second: Gradients,
}

impl AdamState {
    pub fn new(classes: usize, dim: usize, params: AdamParams) -> Self {
        Self {
            params,
            step: 0,
            first: Gradients::zeros(classes, dim),
            second: Gradients::zeros(classes, dim),
        }
    }

    /// One bias-corrected Adam update of `clf` in place.
    pub fn step(&mut self, clf: &mut LinearClassifier, grads: &Gradients) -> Result<(), ClassifierError> {
        let shape = (clf.num_classes(), clf.dim());
        for (name, got) in [
            ("gradient", grads.weights.dim()),
            ("moment", self.first.weights.dim()),
        ] {
            if got != shape {
                return Err(ClassifierError::InvalidConfig(format!(
                    "{name} shape {got:?} does not match parameters {shape:?}"
                )));
            }
        }
        self.step += 1;
        let AdamParams {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.params;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let (weights, bias) = clf.params_mut();
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        };
        ndarray::Zip::from(weights)
            .and(&mut self.first.weights)
            .and(&mut self.second.weights)
            .and(&grads.weights)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        ndarray::Zip::from(bias)
            .and(&mut self.first.bias)
            .and(&mut self.second.bias)
            .and(&grads.bias)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        Ok(())
    }
}

/// Functional form: returns the updated probe and optimizer state.
pub fn adam_step(
    clf: &LinearClassifier,
    state: &AdamState,
    grads: &Gradients,
) -> Result<(LinearClassifier, AdamState), ClassifierError> {
    let (mut clf, mut state) = (clf.clone(), state.clone());
    state.step(&mut clf, grads)?;
    Ok((clf, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    #[test]
    fn zero_gradient_is_fixed_point() {
        let clf = LinearClassifier::from_parts(array![[0.5, -1.0]], array![0.25]).unwrap();
        let state = AdamState::new(1, 2, AdamParams::default());
        let (next, next_state) = adam_step(&clf, &state, &Gradients::zeros(1, 2)).unwrap();
        assert_eq!(next, clf);
        assert_eq!(next_state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // At t = 1 the bias-corrected moments are g and g^2, so the update is
        // lr * g / (|g| + eps), i.e. lr * sign(g) for |g| >> eps.
        for g in [3.7, -0.02, 1e-3] {
            let clf = LinearClassifier::zeros(1, 1);
            let state = AdamState::new(1, 1, AdamParams::default());
            let grads = Gradients {
                weights: Array2::from_elem((1, 1), g),
                bias: Array1::zeros(1),
            };
            let (next, _) = adam_step(&clf, &state, &grads).unwrap();
            let expected = -1e-3 * g / (g.abs() + 1e-8);
            assert!((next.weights()[[0, 0]] - expected).abs() < 1e-15);
            assert!((next.weights()[[0, 0]].abs() - 1e-3).abs() < 1e-7);
        }
    }

    #[test]
    fn deterministic() {
        let clf = LinearClassifier::from_parts(array![[0.1, 0.2], [0.3, -0.4]], array![0.0, 1.0]).unwrap();
        let state = AdamState::new(2, 2, AdamParams::default());
        let grads = Gradients {
            weights: array![[0.3, -0.1], [0.0, 2.0]],
            bias: array![1.0, -1.0],
        };
        assert_eq!(adam_step(&clf, &state, &grads).unwrap(), adam_step(&clf, &state, &grads).unwrap());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut clf = LinearClassifier::zeros(2, 3);
        let mut state = AdamState::new(2, 3, AdamParams::default());
        assert!(state.step(&mut clf, &Gradients::zeros(3, 3)).is_err());
        assert_eq!(state.step, 0);
    }
}
