use serde::{Deserialize, Serialize};

use super::{MlpModel, NnError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment accumulators plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            step: 0,
        }
    }

    pub fn for_model(model: &MlpModel<T>) -> Self {
        Self::new(model.n_params())
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(
    model: &mut MlpModel<T>,
    grads: &[T],
    state: &mut AdamState<T>,
    config: &AdamConfig,
) -> Result<(), NnError> {
    let n = model.n_params();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(NnError::ShapeMismatch);
    }
    state.step += 1;
    let t = state.step as f64;
    let b1 = T::of(config.beta1);
    let b2 = T::of(config.beta2);
    let c1 = T::of(1.0 - config.beta1.powf(t));
    let c2 = T::of(1.0 - config.beta2.powf(t));
    let lr = T::of(config.learning_rate);
    let eps = T::of(config.epsilon);
    let one = T::one();
    for (((p, &g), m), v) in model
        .params_mut()
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(w: f64) -> MlpModel<f64> {
        let mut m = MlpModel::zeros(&[1, 1]).unwrap();
        m.params_mut()[0] = w;
        m
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = MlpModel::<f64>::with_dims(&[2, 3, 1], 4).unwrap();
        let before = m.clone();
        let mut s = AdamState::for_model(&m);
        let zeros = vec![0.0; m.n_params()];
        adam_step(&mut m, &zeros, &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(m, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // step 1: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
        let cfg = AdamConfig::default();
        for g in [0.37, -2.5, 1e-3] {
            let mut m = scalar_model(1.0);
            let mut s = AdamState::for_model(&m);
            let mut grads = vec![0.0; m.n_params()];
            grads[0] = g;
            adam_step(&mut m, &grads, &mut s, &cfg).unwrap();
            let expected = 1.0 - cfg.learning_rate * g / (g.abs() + cfg.epsilon);
            assert!((m.params()[0] - expected).abs() < 1e-15);
            assert!((m.params()[0] - (1.0 - 0.001 * g.signum())).abs() < 1e-8);
        }
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let cfg = AdamConfig::default();
        let base = MlpModel::<f64>::with_dims(&[2, 3, 1], 1).unwrap();
        let grads: Vec<f64> = (0..base.n_params()).map(|i| (i as f64 - 6.0) * 0.1).collect();
        let run = || {
            let mut m = base.clone();
            let mut s = AdamState::for_model(&m);
            adam_step(&mut m, &grads, &mut s, &cfg).unwrap();
            adam_step(&mut m, &grads, &mut s, &cfg).unwrap();
            (m, s)
        };
        assert_eq!(run(), run());
        let mut m = base.clone();
        let mut s = AdamState::new(3);
        assert!(matches!(adam_step(&mut m, &grads, &mut s, &cfg), Err(NnError::ShapeMismatch)));
    }
}
