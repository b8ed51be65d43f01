use serde::{Deserialize, Serialize};

use super::{FaultError, WeibullModel};
use crate::scalar::Scalar;

/// How the per-interval cost is scored.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostMode {
    /// `t_c / T + F(t_c) * t_r / T`.
    #[default]
    Literal,
    /// `c_s / t_c + F(t_c) * t_r / T`, with `c_s` the cost of one checkpoint
    /// write.
    OverheadRate { checkpoint_cost: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointPolicy {
    /// Local training budget per round, in simulated time units.
    pub total_time: f64,
    pub recovery_time: f64,
    /// Ascending grid of `t_c` values in `(0, total_time]`.
    pub candidate_intervals: Vec<f64>,
    #[serde(default)]
    pub cost_mode: CostMode,
}

impl CheckpointPolicy {
    pub fn validate(&self) -> Result<(), FaultError> {
        let bad = |m: String| Err(FaultError::InvalidPolicy(m));
        if !(self.total_time > 0.0 && self.total_time.is_finite()) {
            return bad(format!("total_time must be positive, got {}", self.total_time));
        }
        if !(self.recovery_time >= 0.0 && self.recovery_time.is_finite()) {
            return bad(format!("recovery_time must be non-negative, got {}", self.recovery_time));
        }
        if self.candidate_intervals.is_empty() {
            return Err(FaultError::EmptyGrid);
        }
        for &t in &self.candidate_intervals {
            if !(t > 0.0 && t <= self.total_time) {
                return Err(FaultError::IntervalOutOfRange {
                    t_c: t,
                    total: self.total_time,
                });
            }
        }
        if self.candidate_intervals.windows(2).any(|w| w[0] >= w[1]) {
            return bad("candidate_intervals must be strictly ascending".into());
        }
        if let CostMode::OverheadRate { checkpoint_cost } = self.cost_mode {
            if !(checkpoint_cost >= 0.0 && checkpoint_cost.is_finite()) {
                return bad(format!("checkpoint_cost must be non-negative, got {checkpoint_cost}"));
            }
        }
        Ok(())
    }
}

/// Expected relative cost of checkpointing every `t_c`, with the failure
/// probability per interval taken as `F(t_c)`.
pub fn checkpoint_cost<T: Scalar>(policy: &CheckpointPolicy, model: &WeibullModel<T>, t_c: f64) -> Result<f64, FaultError> {
    let total = policy.total_time;
    if !(t_c > 0.0 && t_c <= total) {
        return Err(FaultError::IntervalOutOfRange { t_c, total });
    }
    let p_fail = model.cdf(T::of(t_c))?.as_f64();
    let rework = p_fail * policy.recovery_time / total;
    Ok(match policy.cost_mode {
        CostMode::Literal => t_c / total + rework,
        CostMode::OverheadRate { checkpoint_cost } => checkpoint_cost / t_c + rework,
    })
}

/// Grid minimizer of [`checkpoint_cost`]; ties go to the smaller interval.
pub fn optimal_interval<T: Scalar>(policy: &CheckpointPolicy, model: &WeibullModel<T>) -> Result<(f64, f64), FaultError> {
    policy.validate()?;
    let mut best: Option<(f64, f64)> = None;
    for &t_c in &policy.candidate_intervals {
        let c = checkpoint_cost(policy, model, t_c)?;
        best = match best {
            Some((bt, bc)) if bc < c || (bc == c && bt <= t_c) => Some((bt, bc)),
            _ => Some((t_c, c)),
        };
    }
    best.ok_or(FaultError::EmptyGrid)
}

/// Whole epochs between checkpoints for an interval `t_c` when one epoch
/// takes `epoch_time`. Never less than one.
pub fn checkpoint_every(t_c: f64, epoch_time: f64) -> usize {
    if !(epoch_time > 0.0) {
        return 1;
    }
    ((t_c / epoch_time).floor() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::seed;

    fn policy(total: f64, t_r: f64, grid: &[f64], cost_mode: CostMode) -> CheckpointPolicy {
        CheckpointPolicy {
            total_time: total,
            recovery_time: t_r,
            candidate_intervals: grid.to_vec(),
            cost_mode,
        }
    }

    /// Direct formula evaluation and scan, independent of the library path.
    fn scan(p: &CheckpointPolicy, lambda: f64, k: f64) -> (f64, f64) {
        let mut best = (f64::NAN, f64::INFINITY);
        for &t in &p.candidate_intervals {
            let f = 1.0 - (-(t / lambda).powf(k)).exp();
            let c = match p.cost_mode {
                CostMode::Literal => t / p.total_time,
                CostMode::OverheadRate { checkpoint_cost } => checkpoint_cost / t,
            } + f * p.recovery_time / p.total_time;
            if c < best.1 {
                best = (t, c);
            }
        }
        best
    }

    #[test]
    fn cost_examples() {
        let m = WeibullModel::new(50.0, 1.0).unwrap();
        let p = policy(100.0, 0.0, &[10.0], CostMode::Literal);
        assert_eq!(checkpoint_cost(&p, &m, 37.0).unwrap(), 0.37);
        assert_eq!(checkpoint_cost(&p, &m, 100.0).unwrap(), 1.0);

        let p = policy(100.0, 10.0, &[10.0], CostMode::Literal);
        let c = checkpoint_cost(&p, &m, 50.0).unwrap();
        assert!((c - (0.5 + (1.0 - (-1.0f64).exp()) * 0.1)).abs() < 1e-15);
        assert!((c - 0.563_212).abs() < 1e-6);

        assert!(matches!(checkpoint_cost(&p, &m, 0.0), Err(FaultError::IntervalOutOfRange { .. })));
        assert!(matches!(checkpoint_cost(&p, &m, 100.5), Err(FaultError::IntervalOutOfRange { .. })));
    }

    #[test]
    fn optimum_examples() {
        let m = WeibullModel::new(50.0, 1.0).unwrap();
        let single = policy(100.0, 10.0, &[30.0], CostMode::Literal);
        assert_eq!(optimal_interval(&single, &m).unwrap().0, 30.0);

        let grid = [5.0, 10.0, 20.0, 40.0, 80.0];
        let literal = policy(100.0, 10.0, &grid, CostMode::Literal);
        assert_eq!(optimal_interval(&literal, &m).unwrap().0, 5.0);

        let overhead = policy(100.0, 10.0, &[5.0, 10.0, 20.0, 40.0], CostMode::OverheadRate { checkpoint_cost: 1.0 });
        let got = optimal_interval(&overhead, &m).unwrap();
        assert_eq!(got, scan(&overhead, 50.0, 1.0));
        assert_eq!(got.0, 40.0);

        let empty = policy(100.0, 10.0, &[], CostMode::Literal);
        assert!(matches!(optimal_interval(&empty, &m), Err(FaultError::EmptyGrid)));
    }

    #[test]
    fn ties_go_to_smaller_interval() {
        // zero recovery and zero write cost: every candidate costs 0
        let m = WeibullModel::new(50.0, 1.0).unwrap();
        let p = policy(100.0, 0.0, &[5.0, 10.0, 20.0], CostMode::OverheadRate { checkpoint_cost: 0.0 });
        assert_eq!(optimal_interval(&p, &m).unwrap(), (5.0, 0.0));
    }

    #[test]
    fn optimizer_matches_scan_on_random_instances() {
        let mut rng = seed::rng(99);
        for i in 0..200 {
            let total = rng.random_range(1.0..500.0);
            let n = rng.random_range(1..30);
            let mut grid: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..=1.0) * total).collect();
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let mode = if i % 2 == 0 {
                CostMode::Literal
            } else {
                CostMode::OverheadRate {
                    checkpoint_cost: rng.random_range(0.0..10.0),
                }
            };
            let p = policy(total, rng.random_range(0.0..100.0), &grid, mode);
            let (lambda, k) = (rng.random_range(0.5..200.0), rng.random_range(0.2..5.0));
            let m = WeibullModel::new(lambda, k).unwrap();
            let got = optimal_interval(&p, &m).unwrap();
            let want = scan(&p, lambda, k);
            assert_eq!(got.0, want.0, "instance {i}");
            assert!(grid.contains(&got.0));
            if mode == CostMode::Literal {
                assert_eq!(got.0, grid[0]);
            }
        }
    }

    #[test]
    fn policy_validation() {
        let ok = policy(10.0, 1.0, &[1.0, 2.0], CostMode::Literal);
        assert!(ok.validate().is_ok());
        assert!(policy(10.0, 1.0, &[2.0, 1.0], CostMode::Literal).validate().is_err());
        assert!(policy(10.0, -1.0, &[2.0], CostMode::Literal).validate().is_err());
        assert!(policy(10.0, 1.0, &[11.0], CostMode::Literal).validate().is_err());
    }

    #[test]
    fn epochs_per_checkpoint() {
        assert_eq!(checkpoint_every(5.0, 2.0), 2);
        assert_eq!(checkpoint_every(0.5, 2.0), 1);
        assert_eq!(checkpoint_every(10.0, 2.0), 5);
    }
}
