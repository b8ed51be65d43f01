use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::FlError;
use crate::data::TimeSeriesFrame;
use crate::scalar::Scalar;
use crate::seed;

/// Share of each shard used for training; the time-ordered tail validates.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionStrategy {
    /// Consecutive blocks of rows.
    Contiguous,
    /// Client `k` takes rows `k, k + n, k + 2n, ...`.
    #[default]
    Strided,
    /// Seeded random assignment, then time order within each shard.
    Shuffled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shard<T> {
    pub train: TimeSeriesFrame<T>,
    pub validation: TimeSeriesFrame<T>,
}

impl<T: Scalar> Shard<T> {
    pub fn len(&self) -> usize {
        self.train.n_rows() + self.validation.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Train rows followed by validation rows.
    pub fn rows(&self) -> TimeSeriesFrame<T> {
        self.train.concat(&self.validation).expect("shard halves share a schema")
    }

    /// Splits `rows` at `floor(0.8 * n)`, keeping time order.
    pub fn split(rows: TimeSeriesFrame<T>) -> Self {
        let n = rows.n_rows();
        let cut = if n < 2 {
            n
        } else {
            ((TRAIN_FRACTION * n as f64).floor() as usize).clamp(1, n - 1)
        };
        Self {
            train: rows.slice_rows(0..cut),
            validation: rows.slice_rows(cut..n),
        }
    }
}

/// Disjoint shards covering every row. Requires at least four rows per
/// client. `seed` only affects [`PartitionStrategy::Shuffled`].
pub fn partition_shards<T: Scalar>(
    frame: &TimeSeriesFrame<T>,
    n_clients: usize,
    strategy: PartitionStrategy,
    seed: u64,
) -> Result<Vec<Shard<T>>, FlError> {
    let n = frame.n_rows();
    if n_clients == 0 || n_clients * 4 > n {
        return Err(FlError::TooManyClients { clients: n_clients, rows: n });
    }
    let assignment: Vec<Vec<usize>> = match strategy {
        PartitionStrategy::Contiguous => {
            let (base, extra) = (n / n_clients, n % n_clients);
            let mut start = 0;
            (0..n_clients)
                .map(|k| {
                    let len = base + usize::from(k < extra);
                    let idx = (start..start + len).collect();
                    start += len;
                    idx
                })
                .collect()
        }
        PartitionStrategy::Strided => (0..n_clients).map(|k| (k..n).step_by(n_clients).collect()).collect(),
        PartitionStrategy::Shuffled => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seed::rng_for(&[seed, seed::stream::SHARD]));
            let mut shards: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
            for (i, row) in order.into_iter().enumerate() {
                shards[i % n_clients].push(row);
            }
            for s in &mut shards {
                s.sort_unstable();
            }
            shards
        }
    };
    Ok(assignment
        .into_iter()
        .map(|idx| Shard::split(frame.select_rows(&idx)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn frame(n: usize) -> TimeSeriesFrame<f64> {
        let values = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        TimeSeriesFrame::from_matrix(values, Some((0..n).map(|i| (i % 2) as u8).collect())).unwrap()
    }

    fn rows_of(s: &Shard<f64>) -> Vec<usize> {
        s.rows().values().column(0).iter().map(|&v| v as usize).collect()
    }

    #[test]
    fn single_client_gets_everything() {
        let f = frame(20);
        let s = partition_shards(&f, 1, PartitionStrategy::Contiguous, 0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].rows(), f);
        assert_eq!(s[0].train.n_rows(), 16);
        assert_eq!(s[0].validation.n_rows(), 4);
    }

    #[test]
    fn contiguous_blocks() {
        let s = partition_shards(&frame(100), 10, PartitionStrategy::Contiguous, 0).unwrap();
        for (k, shard) in s.iter().enumerate() {
            assert_eq!(rows_of(shard), (10 * k..10 * k + 10).collect::<Vec<_>>());
            assert_eq!(shard.train.n_rows(), 8);
        }
    }

    #[test]
    fn strided_rows() {
        let s = partition_shards(&frame(100), 10, PartitionStrategy::Strided, 0).unwrap();
        for (k, shard) in s.iter().enumerate() {
            assert_eq!(rows_of(shard), (k..100).step_by(10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn every_strategy_is_a_disjoint_cover() {
        for strategy in [PartitionStrategy::Contiguous, PartitionStrategy::Strided, PartitionStrategy::Shuffled] {
            let s = partition_shards(&frame(103), 7, strategy, 5).unwrap();
            let mut all: Vec<usize> = s.iter().flat_map(rows_of).collect();
            all.sort_unstable();
            assert_eq!(all, (0..103).collect::<Vec<_>>(), "{strategy:?}");
            assert!(s.iter().all(|sh| sh.validation.n_rows() >= 1 && sh.train.n_rows() >= 1));
        }
        let a = partition_shards(&frame(103), 7, PartitionStrategy::Shuffled, 5).unwrap();
        let b = partition_shards(&frame(103), 7, PartitionStrategy::Shuffled, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_clients() {
        assert!(partition_shards(&frame(4), 1, PartitionStrategy::Strided, 0).is_ok());
        assert!(matches!(
            partition_shards(&frame(39), 10, PartitionStrategy::Strided, 0),
            Err(FlError::TooManyClients { .. })
        ));
    }
}
