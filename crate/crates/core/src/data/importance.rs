use rand::seq::SliceRandom;

use super::{DataError, TimeSeriesFrame};
use crate::scalar::Scalar;
use crate::seed;

/// Accuracy drop when each sensor column is shuffled.
///
/// `importance[j] = baseline - mean(accuracy with column j permuted)`, with
/// `repeats` seeded shuffles per column (one by default).
pub fn permutation_importance<T, F>(
    frame: &TimeSeriesFrame<T>,
    mut model_eval: F,
    seed: u64,
    repeats: usize,
) -> Result<Vec<f64>, DataError>
where
    T: Scalar,
    F: FnMut(&TimeSeriesFrame<T>) -> f64,
{
    if frame.labels().is_none() {
        return Err(DataError::MissingLabels);
    }
    let repeats = repeats.max(1);
    let baseline = model_eval(frame);
    let mut out = Vec::with_capacity(frame.n_sensors());
    for j in 0..frame.n_sensors() {
        let mut total = 0.0;
        for r in 0..repeats {
            let mut rng = seed::rng_for(&[seed, j as u64, r as u64]);
            let mut col = frame.values().column(j);
            col.shuffle(&mut rng);
            let mut values = frame.values().clone();
            for (i, v) in col.into_iter().enumerate() {
                values.set(i, j, v);
            }
            total += model_eval(&frame.with_values(values));
        }
        out.push(baseline - total / repeats as f64);
    }
    Ok(out)
}

/// Indices of sensors whose importance is at least `min_importance`, in
/// original order. Falls back to the single most important sensor when none
/// qualifies, so the result is never empty.
pub fn select_features(importances: &[f64], min_importance: f64) -> Vec<usize> {
    let keep: Vec<usize> = importances
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v >= min_importance)
        .map(|(j, _)| j)
        .collect();
    if !keep.is_empty() || importances.is_empty() {
        return keep;
    }
    let best = importances
        .iter()
        .enumerate()
        .fold(0, |b, (j, &v)| if v > importances[b] { j } else { b });
    vec![best]
}
