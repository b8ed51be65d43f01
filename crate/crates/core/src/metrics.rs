//! Classification metrics and the Mann-Whitney U test.
//!
//! AUC-ROC is computed as the normalized Mann-Whitney statistic: the
//! fraction of (positive, negative) pairs where the positive scores higher,
//! with ties counted as one half. Both are evaluated through midranks in
//! `O(n log n)`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("input is empty")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("labels must be 0 or 1")]
    InvalidLabel,
    #[error("AUC needs both classes present")]
    SingleClass,
    #[error("sample is empty")]
    EmptySample,
    #[error("scores contain NaN")]
    NanScore,
}

/// Scores paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels<T> {
    scores: Vec<T>,
    labels: Vec<u8>,
}

impl<T: Scalar> ScoredLabels<T> {
    pub fn new(scores: Vec<T>, labels: Vec<u8>) -> Result<Self, MetricsError> {
        if scores.len() != labels.len() {
            return Err(MetricsError::LengthMismatch(scores.len(), labels.len()));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(MetricsError::InvalidLabel);
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(MetricsError::NanScore);
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    fn split(&self) -> (Vec<T>, Vec<T>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (&s, &y) in self.scores.iter().zip(&self.labels) {
            if y == 1 {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
        (pos, neg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// First sample stochastically greater than the second.
    #[default]
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    pub u_statistic: f64,
    pub p_value: f64,
    pub alternative: Alternative,
}

pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn auc_roc<T: Scalar>(data: &ScoredLabels<T>) -> Result<f64, MetricsError> {
    let (pos, neg) = data.split();
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricsError::SingleClass);
    }
    let ranks = RankSummary::of(&pos, &neg);
    Ok(ranks.u_first / (pos.len() as f64 * neg.len() as f64))
}

/// Midrank sums over the pooled sample plus the tie-group sizes.
struct RankSummary {
    u_first: f64,
    tie_sizes: Vec<usize>,
}

impl RankSummary {
    fn of<T: Scalar>(a: &[T], b: &[T]) -> Self {
        let mut pooled: Vec<(T, bool)> = a
            .iter()
            .map(|&v| (v, true))
            .chain(b.iter().map(|&v| (v, false)))
            .collect();
        pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));
        // twice the rank sum of `a`, kept integral until the end
        let mut rank_sum_x2: u128 = 0;
        let mut tie_sizes = Vec::new();
        let mut i = 0;
        while i < pooled.len() {
            let mut j = i + 1;
            while j < pooled.len() && pooled[j].0 == pooled[i].0 {
                j += 1;
            }
            // ranks i+1..=j, midrank = (i + 1 + j) / 2
            let mid_x2 = (i + 1 + j) as u128;
            let from_a = pooled[i..j].iter().filter(|e| e.1).count() as u128;
            rank_sum_x2 += mid_x2 * from_a;
            if j - i > 1 {
                tie_sizes.push(j - i);
            }
            i = j;
        }
        let n1 = a.len() as u128;
        let u_x2 = rank_sum_x2 - n1 * (n1 + 1);
        Self {
            u_first: u_x2 as f64 / 2.0,
            tie_sizes,
        }
    }
}

/// Mann-Whitney U of `sample_a` against `sample_b`:
/// `U_a = #{a > b} + 0.5 * #{a == b}` over all pairs.
pub fn mann_whitney_u(sample_a: &[f64], sample_b: &[f64], alternative: Alternative) -> Result<UTestResult, MetricsError> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    if sample_a.iter().chain(sample_b).any(|v| v.is_nan()) {
        return Err(MetricsError::NanScore);
    }
    let ranks = RankSummary::of(sample_a, sample_b);
    let p_value = u_p_value(ranks.u_first, sample_a.len(), sample_b.len(), &ranks.tie_sizes, alternative);
    Ok(UTestResult {
        u_statistic: ranks.u_first,
        p_value,
        alternative,
    })
}

/// Normal-approximation p-value with tie-corrected variance and a 0.5
/// continuity correction. `tie_counts` lists the sizes of tied groups in
/// the pooled sample (groups of size 1 may be included; they contribute 0).
pub fn u_p_value(u: f64, n1: usize, n2: usize, tie_counts: &[usize], alternative: Alternative) -> f64 {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let n = n1f + n2f;
    let mean = n1f * n2f / 2.0;
    let tie_term: f64 = tie_counts
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = if n > 1.0 {
        n1f * n2f / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)))
    } else {
        0.0
    };
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let p = match alternative {
        Alternative::Greater => normal_sf((u - mean - 0.5) / sd),
        Alternative::TwoSided => 2.0 * normal_sf(((u - mean).abs() - 0.5) / sd),
    };
    p.clamp(0.0, 1.0)
}

/// Standard normal survival function `P(Z > z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Complementary error function by the Chebyshev fit of Press et al.
/// (Numerical Recipes `erfcc`); fractional error below 1.2e-7 everywhere.
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let r = t * poly.exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}
