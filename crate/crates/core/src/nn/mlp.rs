use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::seed;

/// Hidden widths used when none are given.
pub const DEFAULT_HIDDEN: [usize; 3] = [128, 64, 32];

/// Multilayer perceptron with every parameter in one flat vector.
///
/// Layout, layer by layer: the `fan_out x fan_in` weight matrix in row-major
/// order, then the `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel<T> {
    dims: Vec<usize>,
    params: Vec<T>,
}

/// Inverted dropout on hidden activations, active only in training passes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
}

pub(crate) fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn check_dims(dims: &[usize]) -> Result<(), NnError> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(NnError::InvalidConfig(format!("bad layer dims {dims:?}")));
    }
    if dims.last() != Some(&1) {
        return Err(NnError::InvalidConfig("output layer must have width 1".into()));
    }
    Ok(())
}

impl<T: Scalar> MlpModel<T> {
    /// `n_features -> 128 -> 64 -> 32 -> 1`, He-uniform weights, zero biases.
    pub fn new(n_features: usize, seed: u64) -> Result<Self, NnError> {
        let mut dims = vec![n_features];
        dims.extend(DEFAULT_HIDDEN);
        dims.push(1);
        Self::with_dims(&dims, seed)
    }

    pub fn with_dims(dims: &[usize], seed: u64) -> Result<Self, NnError> {
        check_dims(dims)?;
        let mut rng = seed::rng_for(&[seed, seed::stream::INIT]);
        let mut params = Vec::with_capacity(param_count(dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(T::of(rng.random_range(-limit..limit)));
            }
            params.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        Ok(Self { dims: dims.to_vec(), params })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self, NnError> {
        check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![T::zero(); param_count(dims)],
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_features(&self) -> usize {
        self.dims[0]
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn flatten_params(&self) -> Vec<T> {
        self.params.clone()
    }

    /// Replaces all parameters, keeping the architecture.
    pub fn set_params(&mut self, params: &[T]) -> Result<(), NnError> {
        if params.len() != self.params.len() {
            return Err(NnError::LengthMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Offsets of (weights, biases) for layer `l`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let w_off = param_count(&self.dims[..=l]);
        (w_off, w_off + self.dims[l] * self.dims[l + 1])
    }

    /// Hand-set weights (`fan_out x fan_in`, row-major) and biases for layer `l`.
    pub fn set_layer(&mut self, l: usize, weights: &[T], biases: &[T]) -> Result<(), NnError> {
        let (w_off, b_off) = self.offsets(l);
        let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
        if weights.len() != fan_in * fan_out || biases.len() != fan_out {
            return Err(NnError::ShapeMismatch);
        }
        self.params[w_off..b_off].copy_from_slice(weights);
        self.params[b_off..b_off + fan_out].copy_from_slice(biases);
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    /// Inference-mode probabilities.
    pub fn predict(&self, batch: &Matrix<T>) -> Result<Vec<T>, NnError> {
        forward(self, batch, None)
    }
}

/// Inverse of [`MlpModel::flatten_params`].
pub fn unflatten_params<T: Scalar>(params: Vec<T>, dims: &[usize]) -> Result<MlpModel<T>, NnError> {
    check_dims(dims)?;
    let expected = param_count(dims);
    if params.len() != expected {
        return Err(NnError::LengthMismatch {
            expected,
            got: params.len(),
        });
    }
    Ok(MlpModel {
        dims: dims.to_vec(),
        params,
    })
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Keeps probabilities strictly inside (0, 1) at the scalar's resolution.
#[inline]
fn open_unit<T: Scalar>(p: T) -> T {
    let eps = T::epsilon();
    p.max(eps).min(T::one() - eps)
}

struct Trace<T> {
    /// Input to each layer (index 0 is the batch itself).
    inputs: Vec<Vec<T>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<T>>,
    /// Per-unit multiplier from dropout (0 or 1/(1-rate)); empty when off.
    masks: Vec<Vec<T>>,
    probs: Vec<T>,
}

fn run_forward<T: Scalar>(
    model: &MlpModel<T>,
    batch: &Matrix<T>,
    dropout: Option<Dropout>,
    keep_trace: bool,
) -> Result<Trace<T>, NnError> {
    if batch.cols() != model.n_features() {
        return Err(NnError::DimensionMismatch {
            expected: model.n_features(),
            got: batch.cols(),
        });
    }
    if !batch.all_finite() {
        return Err(NnError::NonFiniteInput);
    }
    let dropout = dropout.filter(|d| d.rate > 0.0);
    let mut rng = dropout.map(|d| seed::rng(d.seed));
    let n = batch.rows();
    let mut trace = Trace {
        inputs: Vec::new(),
        pre: Vec::new(),
        masks: Vec::new(),
        probs: Vec::new(),
    };
    let mut act = batch.as_slice().to_vec();
    let last = model.n_layers() - 1;
    for l in 0..model.n_layers() {
        let (fan_in, fan_out) = (model.dims[l], model.dims[l + 1]);
        let (w_off, b_off) = model.offsets(l);
        let w = &model.params[w_off..b_off];
        let b = &model.params[b_off..b_off + fan_out];
        let mut z = vec![T::zero(); n * fan_out];
        for r in 0..n {
            let x = &act[r * fan_in..(r + 1) * fan_in];
            let zr = &mut z[r * fan_out..(r + 1) * fan_out];
            for (j, zj) in zr.iter_mut().enumerate() {
                let wj = &w[j * fan_in..(j + 1) * fan_in];
                let mut acc = b[j];
                for (&wi, &xi) in wj.iter().zip(x) {
                    acc += wi * xi;
                }
                *zj = acc;
            }
        }
        if keep_trace {
            trace.inputs.push(std::mem::take(&mut act));
        }
        if l == last {
            trace.probs = z.into_iter().map(|v| open_unit(sigmoid(v))).collect();
            break;
        }
        let mut a: Vec<T> = z.iter().map(|&v| v.max(T::zero())).collect();
        if let (Some(d), Some(rng)) = (dropout, rng.as_mut()) {
            let keep = 1.0 - d.rate;
            let scale = T::of(1.0 / keep);
            let mask: Vec<T> = (0..a.len())
                .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                .collect();
            for (ai, &m) in a.iter_mut().zip(&mask) {
                *ai *= m;
            }
            if keep_trace {
                trace.masks.push(mask);
            }
        }
        if keep_trace {
            trace.pre.push(z);
        }
        act = a;
    }
    Ok(trace)
}

/// Probabilities for each batch row. `dropout: None` is inference mode.
pub fn forward<T: Scalar>(
    model: &MlpModel<T>,
    batch: &Matrix<T>,
    dropout: Option<Dropout>,
) -> Result<Vec<T>, NnError> {
    Ok(run_forward(model, batch, dropout, false)?.probs)
}

/// Mean binary cross-entropy and its gradient (flat, parameter layout).
/// The backward pass reuses the forward pass's dropout masks.
pub fn loss_and_gradients<T: Scalar>(
    model: &MlpModel<T>,
    batch: &Matrix<T>,
    labels: &[u8],
    dropout: Option<Dropout>,
) -> Result<(T, Vec<T>), NnError> {
    let n = batch.rows();
    if n == 0 {
        return Err(NnError::EmptyDataset);
    }
    if labels.len() != n || labels.iter().any(|&y| y > 1) {
        return Err(NnError::InvalidLabels);
    }
    let trace = run_forward(model, batch, dropout, true)?;
    let lo = T::of(1e-12);
    let hi = T::one() - T::of(1e-12).max(T::epsilon());
    let inv_n = T::one() / T::of(n as f64);
    let mut loss = T::zero();
    let mut delta: Vec<T> = Vec::with_capacity(n);
    for (&p, &y) in trace.probs.iter().zip(labels) {
        let pc = p.max(lo).min(hi);
        let yt = T::of(f64::from(y));
        loss -= yt * pc.ln() + (T::one() - yt) * (T::one() - pc).ln();
        delta.push((p - yt) * inv_n);
    }
    loss *= inv_n;

    let mut grads = vec![T::zero(); model.params.len()];
    for l in (0..model.n_layers()).rev() {
        let (fan_in, fan_out) = (model.dims[l], model.dims[l + 1]);
        let (w_off, b_off) = model.offsets(l);
        let input = &trace.inputs[l];
        {
            let (gw, gb) = grads[w_off..b_off + fan_out].split_at_mut(b_off - w_off);
            for r in 0..n {
                let x = &input[r * fan_in..(r + 1) * fan_in];
                let d = &delta[r * fan_out..(r + 1) * fan_out];
                for (j, &dj) in d.iter().enumerate() {
                    if dj == T::zero() {
                        continue;
                    }
                    gb[j] += dj;
                    for (g, &xi) in gw[j * fan_in..(j + 1) * fan_in].iter_mut().zip(x) {
                        *g += dj * xi;
                    }
                }
            }
        }
        if l == 0 {
            break;
        }
        let w = &model.params[w_off..b_off];
        let mut prev = vec![T::zero(); n * fan_in];
        for r in 0..n {
            let d = &delta[r * fan_out..(r + 1) * fan_out];
            let pr = &mut prev[r * fan_in..(r + 1) * fan_in];
            for (j, &dj) in d.iter().enumerate() {
                if dj == T::zero() {
                    continue;
                }
                for (p, &wi) in pr.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                    *p += wi * dj;
                }
            }
        }
        let pre = &trace.pre[l - 1];
        let mask = trace.masks.get(l - 1);
        for (k, p) in prev.iter_mut().enumerate() {
            let m = mask.map_or(T::one(), |m| m[k]);
            if pre[k] <= T::zero() {
                *p = T::zero();
            } else {
                *p *= m;
            }
        }
        delta = prev;
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_outputs_half() {
        let m = MlpModel::<f64>::zeros(&[3, 4, 1]).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(forward(&m, &x, None).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn zero_rate_dropout_equals_inference() {
        let m = MlpModel::<f64>::with_dims(&[2, 8, 4, 1], 3).unwrap();
        let x = Matrix::from_rows(&[[0.3, 0.9], [0.1, -0.4]]).unwrap();
        let train = forward(&m, &x, Some(Dropout { rate: 0.0, seed: 1 })).unwrap();
        assert_eq!(train, forward(&m, &x, None).unwrap());
    }

    #[test]
    fn hand_computed_forward() {
        // 2 -> 2 -> 1: h = relu(W1 x + b1), p = sigmoid(w2 . h + b2)
        let mut m = MlpModel::<f64>::zeros(&[2, 2, 1]).unwrap();
        m.set_layer(0, &[1.0, 2.0, -1.0, 0.5], &[0.1, -0.2]).unwrap();
        m.set_layer(1, &[0.7, -1.3], &[0.05]).unwrap();
        let x = [0.4, 0.3];
        let h0 = (1.0 * x[0] + 2.0 * x[1] + 0.1f64).max(0.0);
        let h1 = (-1.0 * x[0] + 0.5 * x[1] - 0.2f64).max(0.0);
        let z = 0.7 * h0 - 1.3 * h1 + 0.05;
        let expected = 1.0 / (1.0 + (-z).exp());
        let got = forward(&m, &Matrix::from_rows(&[x]).unwrap(), None).unwrap()[0];
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.694_236_340_108_030_5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let m = MlpModel::<f64>::zeros(&[2, 2, 1]).unwrap();
        assert!(matches!(
            forward(&m, &Matrix::from_rows(&[[1.0]]).unwrap(), None),
            Err(NnError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(
            forward(&m, &Matrix::from_rows(&[[1.0, f64::NAN]]).unwrap(), None),
            Err(NnError::NonFiniteInput)
        ));
    }

    #[test]
    fn cross_entropy_closed_form() {
        let m = MlpModel::<f64>::zeros(&[1, 2, 1]).unwrap();
        let x = Matrix::from_rows(&[[0.3]]).unwrap();
        let (loss, _) = loss_and_gradients(&m, &x, &[1], None).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_predictions_have_vanishing_loss() {
        let mut m = MlpModel::<f64>::zeros(&[1, 1, 1]).unwrap();
        m.set_layer(0, &[1.0], &[0.0]).unwrap();
        m.set_layer(1, &[60.0], &[-30.0]).unwrap();
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let (loss, grads) = loss_and_gradients(&m, &x, &[0, 1], None).unwrap();
        assert!(loss < 1e-12, "{loss}");
        assert!(grads.iter().all(|g| g.abs() < 1e-11), "{grads:?}");
    }

    #[test]
    fn parameter_count_for_default_architecture() {
        // 4*128+128 + 128*64+64 + 64*32+32 + 32*1+1
        assert_eq!(param_count(&[4, 128, 64, 32, 1]), 640 + 8256 + 2080 + 33);
        let m = MlpModel::<f64>::new(4, 0).unwrap();
        assert_eq!(m.n_params(), 11009);
        assert_eq!(m.layer_dims(), &[4, 128, 64, 32, 1]);
    }

    #[test]
    fn flatten_round_trip_and_length_check() {
        let m = MlpModel::<f32>::with_dims(&[3, 5, 1], 8).unwrap();
        let back = unflatten_params(m.flatten_params(), m.layer_dims()).unwrap();
        assert_eq!(back, m);
        assert!(matches!(
            unflatten_params(vec![0.0f32; 7], &[3, 5, 1]),
            Err(NnError::LengthMismatch { expected: 26, got: 7 })
        ));
    }

    #[test]
    fn outputs_stay_open_interval() {
        let mut m = MlpModel::<f64>::zeros(&[1, 1, 1]).unwrap();
        m.set_layer(0, &[1.0], &[0.0]).unwrap();
        m.set_layer(1, &[1e4], &[0.0]).unwrap();
        let x = Matrix::from_rows(&[[5.0], [-5.0]]).unwrap();
        let p = forward(&m, &x, None).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0), "{p:?}");
        let (loss, _) = loss_and_gradients(&m, &x, &[0, 1], None).unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        // one hidden unit with constant activation 1.0
        let mut m = MlpModel::<f64>::zeros(&[1, 1, 1]).unwrap();
        m.set_layer(0, &[0.0], &[1.0]).unwrap();
        m.set_layer(1, &[1.0], &[0.0]).unwrap();
        let x = Matrix::from_rows(&[[0.0]]).unwrap();
        let masks = 10_000;
        let mut total = 0.0;
        for s in 0..masks {
            let p = forward(&m, &x, Some(Dropout { rate: 0.4, seed: s })).unwrap()[0];
            // invert the sigmoid to recover the scaled activation
            total += (p / (1.0 - p)).ln();
        }
        let mean = total / masks as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn dropout_masks_are_seeded() {
        let m = MlpModel::<f64>::with_dims(&[2, 16, 1], 1).unwrap();
        let x = Matrix::from_rows(&[[0.5, 0.5]]).unwrap();
        let d = Some(Dropout { rate: 0.4, seed: 77 });
        assert_eq!(forward(&m, &x, d).unwrap(), forward(&m, &x, d).unwrap());
    }
}
