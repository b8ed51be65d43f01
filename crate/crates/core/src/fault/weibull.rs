use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FaultError;
use crate::scalar::Scalar;
use crate::seed;

/// Two-parameter Weibull distribution, `F(t) = 1 - exp(-(t / lambda)^k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullModel<T> {
    lambda: T,
    k: T,
}

impl<T: Scalar> WeibullModel<T> {
    pub fn new(lambda: T, k: T) -> Result<Self, FaultError> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        if !(ok(lambda) && ok(k)) {
            return Err(FaultError::InvalidWeibull {
                lambda: lambda.as_f64(),
                k: k.as_f64(),
            });
        }
        Ok(Self { lambda, k })
    }

    /// Scale.
    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// Shape.
    pub fn k(&self) -> T {
        self.k
    }

    pub fn cdf(&self, t: T) -> Result<T, FaultError> {
        if t < T::zero() || t.is_nan() {
            return Err(FaultError::NegativeTime(t.as_f64()));
        }
        // 1 - exp(-x) computed as -expm1(-x) to keep precision near 0
        Ok(-(-(t / self.lambda).powf(self.k)).exp_m1())
    }

    /// `F^-1(u) = lambda * (-ln(1 - u))^(1/k)` for `u` in `[0, 1)`.
    pub fn inverse_cdf(&self, u: T) -> T {
        self.lambda * (-(-u).ln_1p()).powf(T::one() / self.k)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u: f64 = rng.random();
        self.inverse_cdf(T::of(u))
    }

    /// Draw conditioned on failing before `window`.
    pub fn sample_within<R: Rng + ?Sized>(&self, rng: &mut R, window: T) -> T {
        let u: f64 = rng.random();
        let p = self.cdf(window).unwrap_or(T::one());
        self.inverse_cdf(T::of(u) * p).min(window)
    }
}

pub fn weibull_cdf<T: Scalar>(model: &WeibullModel<T>, t: T) -> Result<T, FaultError> {
    model.cdf(t)
}

/// One inverse-CDF draw from a generator seeded with `seed`.
pub fn weibull_sample<T: Scalar>(model: &WeibullModel<T>, seed: u64) -> T {
    model.sample(&mut seed::rng(seed))
}

/// Maximum-likelihood fit.
///
/// The shape solves
/// `sum(t^k ln t) / sum(t^k) - 1/k - mean(ln t) = 0`, whose left side is
/// increasing in `k`; it is found by bisection on `[1e-3, 1e3]`. Times are
/// scaled by their maximum first so `t^k` stays in `(0, 1]`.
pub fn fit_weibull<T: Scalar>(failure_times: &[T]) -> Result<WeibullModel<T>, FaultError> {
    if failure_times.len() < 2 {
        return Err(FaultError::InsufficientData);
    }
    let t: Vec<f64> = failure_times.iter().map(|v| v.as_f64()).collect();
    if t.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(FaultError::InvalidData);
    }
    let t_max = t.iter().copied().fold(f64::MIN, f64::max);
    let logs: Vec<f64> = t.iter().map(|&v| (v / t_max).ln()).collect();
    if logs.iter().all(|&l| l == logs[0]) {
        return Err(FaultError::DegenerateData);
    }
    let n = t.len() as f64;
    let mean_log = logs.iter().sum::<f64>() / n;
    let score = |k: f64| {
        let (mut s0, mut s1) = (0.0, 0.0);
        for &l in &logs {
            let w = (k * l).exp();
            s0 += w;
            s1 += w * l;
        }
        s1 / s0 - 1.0 / k - mean_log
    };

    let (mut lo, mut hi) = (1e-3f64, 1e3f64);
    if score(lo) > 0.0 || score(hi) < 0.0 {
        return Err(FaultError::NoConvergence);
    }
    // bisect in log space; the bracket spans six decades
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if score(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    let k = (lo * hi).sqrt();
    let mean_pow = logs.iter().map(|&l| (k * l).exp()).sum::<f64>() / n;
    let lambda = t_max * mean_pow.powf(1.0 / k);
    WeibullModel::new(T::of(lambda), T::of(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(lambda: f64, k: f64) -> WeibullModel<f64> {
        WeibullModel::new(lambda, k).unwrap()
    }

    #[test]
    fn cdf_examples() {
        let m = model(50.0, 2.0);
        assert_eq!(m.cdf(0.0).unwrap(), 0.0);
        for k in [0.5, 1.0, 3.7] {
            let c = model(50.0, k).cdf(50.0).unwrap();
            assert!((c - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        }
        assert!((m.cdf(25.0).unwrap() - (1.0 - (-0.25f64).exp())).abs() < 1e-15);
        assert!((m.cdf(25.0).unwrap() - 0.221_199).abs() < 1e-6);
        assert!(matches!(m.cdf(-1.0), Err(FaultError::NegativeTime(_))));
        assert!(WeibullModel::new(0.0, 1.0).is_err());
        assert!(WeibullModel::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn cdf_is_monotone_and_bounded() {
        let m = model(10.0, 0.7);
        let mut prev = 0.0;
        for i in 0..2000 {
            let c = m.cdf(i as f64 * 0.1).unwrap();
            assert!(c >= prev && c <= 1.0);
            prev = c;
        }
        assert_eq!(m.cdf(1e9).unwrap(), 1.0);
    }

    #[test]
    fn inverse_examples() {
        let m = model(50.0, 1.5);
        assert_eq!(m.inverse_cdf(0.0), 0.0);
        let u = 1.0 - (-1.0f64).exp();
        assert!((m.inverse_cdf(u) - 50.0).abs() < 1e-12);
        assert_eq!(weibull_sample(&m, 7), weibull_sample(&m, 7));
    }

    #[test]
    fn samples_follow_the_cdf() {
        // Kolmogorov-Smirnov distance of 10k draws against the cdf
        let m = model(50.0, 1.5);
        let mut rng = seed::rng(42);
        let mut xs: Vec<f64> = (0..10_000).map(|_| m.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = m.cdf(x).unwrap();
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.02, "KS distance {d}");
    }

    #[test]
    fn truncated_draws_stay_in_window() {
        let m = model(50.0, 1.5);
        let mut rng = seed::rng(3);
        for _ in 0..1000 {
            let t = m.sample_within(&mut rng, 10.0);
            assert!((0.0..=10.0).contains(&t));
        }
    }

    #[test]
    fn fit_recovers_parameters() {
        for (lambda, k) in [(50.0, 1.0), (50.0, 1.5)] {
            let m = model(lambda, k);
            let mut rng = seed::rng(11);
            let xs: Vec<f64> = (0..10_000).map(|_| m.sample(&mut rng)).collect();
            let fit = fit_weibull(&xs).unwrap();
            assert!((fit.k() / k - 1.0).abs() < 0.05, "k {}", fit.k());
            assert!((fit.lambda() / lambda - 1.0).abs() < 0.05, "lambda {}", fit.lambda());
        }
    }

    #[test]
    fn fit_solves_the_likelihood_equation() {
        let xs = [3.0f64, 7.5, 12.0, 20.0, 41.0];
        let fit = fit_weibull(&xs).unwrap();
        let k = fit.k();
        let n = xs.len() as f64;
        let s0: f64 = xs.iter().map(|t| t.powf(k)).sum();
        let s1: f64 = xs.iter().map(|t| t.powf(k) * t.ln()).sum();
        let ml: f64 = xs.iter().map(|t| t.ln()).sum::<f64>() / n;
        assert!((s1 / s0 - 1.0 / k - ml).abs() < 1e-10);
        assert!((fit.lambda() - (s0 / n).powf(1.0 / k)).abs() < 1e-9);
    }

    #[test]
    fn fit_rejects_bad_data() {
        assert!(matches!(fit_weibull(&[4.0f64]), Err(FaultError::InsufficientData)));
        assert!(matches!(fit_weibull(&[4.0f64, 4.0]), Err(FaultError::DegenerateData)));
        assert!(matches!(fit_weibull(&[4.0f64, -1.0]), Err(FaultError::InvalidData)));
    }
}
