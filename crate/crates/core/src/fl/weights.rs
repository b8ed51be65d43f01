use serde::{Deserialize, Serialize};

use super::FlError;
use crate::scalar::Scalar;

/// Tolerance on the sum of aggregation weights.
pub const ALPHA_SUM_TOLERANCE: f64 = 1e-9;

/// Reliability factors of one contributing client and its normalized weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFactors {
    /// Validation accuracy.
    pub beta: f64,
    /// Sensor reliability.
    pub gamma: f64,
    /// Prediction stability.
    pub delta: f64,
    pub alpha: f64,
}

impl WeightFactors {
    pub fn product(&self) -> f64 {
        self.beta * self.gamma * self.delta
    }
}

/// `exp(-|sigma - sigma_ref| / sigma_ref)`.
pub fn compute_gamma(sigma: f64, sigma_ref: f64) -> Result<f64, FlError> {
    if !(sigma_ref > 0.0 && sigma_ref.is_finite()) {
        return Err(FlError::NonPositiveSigmaRef(sigma_ref));
    }
    Ok((-(sigma - sigma_ref).abs() / sigma_ref).exp())
}

/// `1 / (1 + var(p[t] - p[t-1]))` with the population variance of
/// consecutive differences; windows shorter than two give 1.
pub fn compute_delta(window: &[f64]) -> f64 {
    if window.len() < 2 {
        return 1.0;
    }
    let diffs: Vec<f64> = window.windows(2).map(|w| w[1] - w[0]).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    1.0 / (1.0 + var)
}

/// Normalizes `beta * gamma * delta` over the contributors. When every
/// product is zero the weights fall back to uniform.
pub fn compute_alpha(factors: &[(f64, f64, f64)]) -> Result<Vec<f64>, FlError> {
    if factors.is_empty() {
        return Err(FlError::NoParticipants);
    }
    let products: Vec<f64> = factors.iter().map(|&(b, g, d)| b * g * d).collect();
    if products.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(FlError::InvalidFactors);
    }
    let total: f64 = products.iter().sum();
    if total == 0.0 {
        let u = 1.0 / factors.len() as f64;
        return Ok(vec![u; factors.len()]);
    }
    Ok(products.iter().map(|p| p / total).collect())
}

fn check_lengths<T>(params: &[&[T]], weights: usize) -> Result<usize, FlError> {
    let first = params.first().ok_or(FlError::NoParticipants)?;
    if params.len() != weights {
        return Err(FlError::LengthMismatch {
            expected: params.len(),
            got: weights,
        });
    }
    if let Some(bad) = params.iter().find(|p| p.len() != first.len()) {
        return Err(FlError::LengthMismatch {
            expected: first.len(),
            got: bad.len(),
        });
    }
    Ok(first.len())
}

/// `w = sum_i alpha_i * w_i`, accumulated in participant order.
pub fn aggregate<T: Scalar>(params: &[&[T]], alphas: &[f64]) -> Result<Vec<T>, FlError> {
    let len = check_lengths(params, alphas.len())?;
    let sum: f64 = alphas.iter().sum();
    if (sum - 1.0).abs() > ALPHA_SUM_TOLERANCE || alphas.iter().any(|&a| a < 0.0) {
        return Err(FlError::AlphaSum(sum));
    }
    let mut out = vec![T::zero(); len];
    for (p, &a) in params.iter().zip(alphas) {
        let a = T::of(a);
        for (o, &v) in out.iter_mut().zip(p.iter()) {
            *o += a * v;
        }
    }
    Ok(out)
}

/// Classic federated averaging: `sum_i n_i * w_i / sum_i n_i`.
pub fn fedavg_aggregate<T: Scalar>(params: &[&[T]], shard_sizes: &[usize]) -> Result<Vec<T>, FlError> {
    let len = check_lengths(params, shard_sizes.len())?;
    let total: usize = shard_sizes.iter().sum();
    if total == 0 {
        return Err(FlError::EmptyShard);
    }
    let mut out = vec![T::zero(); len];
    for (p, &n) in params.iter().zip(shard_sizes) {
        let n = T::of(n as f64);
        for (o, &v) in out.iter_mut().zip(p.iter()) {
            *o += n * v;
        }
    }
    let total = T::of(total as f64);
    for o in &mut out {
        *o /= total;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    use crate::seed;

    #[test]
    fn gamma_examples() {
        assert_eq!(compute_gamma(2.0, 2.0).unwrap(), 1.0);
        assert!((compute_gamma(0.0, 2.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((compute_gamma(0.0, 2.0).unwrap() - 0.367_879).abs() < 1e-6);
        // |3s - s| / s = 2
        assert!((compute_gamma(6.0, 2.0).unwrap() - 0.135_335).abs() < 1e-6);
        assert!(matches!(compute_gamma(1.0, 0.0), Err(FlError::NonPositiveSigmaRef(_))));
    }

    #[test]
    fn delta_examples() {
        assert_eq!(compute_delta(&[0.7, 0.7, 0.7]), 1.0);
        // diffs [1, -1, 1]: mean 1/3, population variance 8/9
        assert!((compute_delta(&[0.0, 1.0, 0.0, 1.0]) - 9.0 / 17.0).abs() < 1e-15);
        assert_eq!(compute_delta(&[0.3]), 1.0);
        assert_eq!(compute_delta(&[]), 1.0);
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(compute_alpha(&[(0.8, 0.5, 0.9); 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(compute_alpha(&[(1.0, 1.0, 1.0), (1.0, 3.0, 1.0)]).unwrap(), vec![0.25, 0.75]);
        let e = (-1.0f64).exp();
        let a = compute_alpha(&[(0.9, 1.0, 1.0), (0.9, e, 1.0)]).unwrap();
        assert!((a[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((a[0] - 0.7311).abs() < 1e-4 && (a[1] - 0.2689).abs() < 1e-4);
        assert_eq!(compute_alpha(&[(0.0, 1.0, 1.0), (0.5, 0.0, 1.0)]).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(compute_alpha(&[]), Err(FlError::NoParticipants)));
    }

    #[test]
    fn aggregate_examples() {
        let v = [0.3, -1.0, 2.5];
        assert_eq!(aggregate(&[&v[..], &v[..]], &[0.4, 0.6]).unwrap(), v.to_vec());
        let zeros = [0.0; 3];
        let ones = [1.0; 3];
        assert_eq!(aggregate(&[&zeros[..], &ones[..]], &[0.25, 0.75]).unwrap(), vec![0.75; 3]);
        assert!(matches!(aggregate(&[&zeros[..], &ones[..]], &[0.5, 0.6]), Err(FlError::AlphaSum(_))));
        assert!(matches!(aggregate(&[&zeros[..], &ones[..2]], &[0.5, 0.5]), Err(FlError::LengthMismatch { .. })));
    }

    #[test]
    fn fedavg_examples() {
        let a = [2.0, 4.0];
        let b = [4.0, 8.0];
        assert_eq!(fedavg_aggregate(&[&a[..], &b[..]], &[5, 5]).unwrap(), vec![3.0, 6.0]);
        assert_eq!(fedavg_aggregate(&[&[0.0][..], &[4.0][..]], &[1, 3]).unwrap(), vec![3.0]);
    }

    #[test]
    fn uniform_weights_match_mean_and_fedavg() {
        let mut rng = seed::rng(8);
        let vs: Vec<Vec<f64>> = (0..3).map(|_| (0..50).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let refs: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
        let alpha = compute_alpha(&[(0.9, 0.8, 0.7); 3]).unwrap();
        let adaptive = aggregate(&refs, &alpha).unwrap();
        let fedavg = fedavg_aggregate(&refs, &[40, 40, 40]).unwrap();
        for i in 0..50 {
            let mean = (vs[0][i] + vs[1][i] + vs[2][i]) / 3.0;
            assert!((adaptive[i] - mean).abs() < 1e-12);
            assert!((adaptive[i] - fedavg[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn alphas_are_a_distribution(f in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0), 1..30)) {
            let a = compute_alpha(&f).unwrap();
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= ALPHA_SUM_TOLERANCE);
            prop_assert!(a.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn fedavg_equals_size_weighted_aggregate(
            sizes in prop::collection::vec(1usize..500, 1..8),
            vals in prop::collection::vec(-10.0f64..10.0, 8 * 4),
        ) {
            let vs: Vec<&[f64]> = (0..sizes.len()).map(|i| &vals[i * 4..i * 4 + 4]).collect();
            let total: usize = sizes.iter().sum();
            let alphas: Vec<f64> = sizes.iter().map(|&n| n as f64 / total as f64).collect();
            let a = aggregate(&vs, &alphas).unwrap();
            let b = fedavg_aggregate(&vs, &sizes).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn larger_sigma_deviation_lowers_alpha(
            beta in 0.05f64..1.0, delta in 0.1f64..=1.0, sigma_ref in 0.1f64..5.0,
            dev in 0.0f64..3.0, extra in 0.01f64..3.0, others in prop::collection::vec((0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0), 1..6),
        ) {
            let alpha_at = |d: f64| {
                let gamma = compute_gamma(sigma_ref * (1.0 + d), sigma_ref).unwrap();
                let mut f = vec![(beta, gamma, delta)];
                f.extend(others.iter().copied());
                compute_alpha(&f).unwrap()[0]
            };
            prop_assert!(alpha_at(dev + extra) < alpha_at(dev));
        }
    }
}
