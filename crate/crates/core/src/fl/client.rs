use std::collections::VecDeque;

use rand::seq::SliceRandom;

use super::{FlError, Shard};
use crate::fault::CheckpointRef;
use crate::matrix::Matrix;
use crate::nn::{prediction_accuracy, AdamState, LabeledSet, MlpModel};
use crate::scalar::Scalar;
use crate::seed;

/// Default length of the prediction-stability window, in rounds.
pub const DEFAULT_STABILITY_WINDOW: usize = 5;

/// One simulated federated node.
#[derive(Debug, Clone)]
pub struct ClientState<T> {
    pub client_id: usize,
    pub train: LabeledSet<T>,
    pub validation: LabeledSet<T>,
    pub model: MlpModel<T>,
    pub adam: AdamState<T>,
    /// Reference sensor variance fixed at calibration.
    pub sigma_ref: f64,
    /// Mean validation prediction of the last rounds, oldest first.
    pub prediction_window: VecDeque<f64>,
    pub window_len: usize,
    pub alive: bool,
    pub last_checkpoint: Option<CheckpointRef>,
    /// `beta * gamma * delta` from the last round this client contributed to.
    pub last_score: Option<f64>,
}

impl<T: Scalar> ClientState<T> {
    pub fn new(client_id: usize, shard: &Shard<T>, model: MlpModel<T>, sigma_ref: f64, window_len: usize) -> Result<Self, FlError> {
        if !(sigma_ref > 0.0 && sigma_ref.is_finite()) {
            return Err(FlError::NonPositiveSigmaRef(sigma_ref));
        }
        let train = LabeledSet::from_frame(&shard.train)?;
        let validation = LabeledSet::from_frame(&shard.validation)?;
        if validation.is_empty() {
            return Err(FlError::EmptyValidation(client_id));
        }
        for set in [&train, &validation] {
            if set.features.cols() != model.n_features() {
                return Err(FlError::DimensionMismatch {
                    expected: model.n_features(),
                    got: set.features.cols(),
                });
            }
        }
        let adam = AdamState::for_model(&model);
        Ok(Self {
            client_id,
            train,
            validation,
            model,
            adam,
            sigma_ref,
            prediction_window: VecDeque::with_capacity(window_len),
            window_len: window_len.max(1),
            alive: true,
            last_checkpoint: None,
            last_score: None,
        })
    }

    pub fn shard_size(&self) -> usize {
        self.train.len()
    }

    /// Mean over sensors of the per-sensor population variance of the
    /// training rows.
    pub fn sigma(&self) -> f64 {
        mean_sensor_variance(&self.train.features)
    }

    pub fn record_prediction(&mut self, p: f64) {
        if self.prediction_window.len() == self.window_len {
            self.prediction_window.pop_front();
        }
        self.prediction_window.push_back(p);
    }

    pub fn window(&self) -> Vec<f64> {
        self.prediction_window.iter().copied().collect()
    }
}

/// Mean of the per-column population variances; zero for an empty matrix.
pub fn mean_sensor_variance<T: Scalar>(values: &Matrix<T>) -> f64 {
    if values.rows() == 0 || values.cols() == 0 {
        return 0.0;
    }
    let n = values.rows() as f64;
    let total: f64 = (0..values.cols())
        .map(|j| {
            let col: Vec<f64> = values.column(j).iter().map(|v| v.as_f64()).collect();
            let mean = col.iter().sum::<f64>() / n;
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
        })
        .sum();
    total / values.cols() as f64
}

/// Validation accuracy of the client's current model at threshold 0.5.
pub fn compute_beta<T: Scalar>(client: &ClientState<T>) -> Result<f64, FlError> {
    if client.validation.is_empty() {
        return Err(FlError::EmptyValidation(client.client_id));
    }
    Ok(prediction_accuracy(&client.model, &client.validation)?)
}

/// Picks up to `k` alive clients.
///
/// Clients without a score yet come first, in a random order drawn from
/// `round_seed`; scored clients follow by descending score, ties by
/// ascending id. Returns ids in ascending order.
pub fn select_nodes<T: Scalar>(clients: &[ClientState<T>], k: usize, round_seed: u64) -> Result<Vec<usize>, FlError> {
    if k == 0 {
        return Err(FlError::InvalidConfig("node selection k must be at least 1".into()));
    }
    let alive: Vec<&ClientState<T>> = clients.iter().filter(|c| c.alive).collect();
    if alive.is_empty() {
        return Err(FlError::NoAliveClients);
    }
    let mut picked: Vec<usize> = if k >= alive.len() {
        alive.iter().map(|c| c.client_id).collect()
    } else {
        let mut unscored: Vec<usize> = alive.iter().filter(|c| c.last_score.is_none()).map(|c| c.client_id).collect();
        unscored.sort_unstable();
        unscored.shuffle(&mut seed::rng_for(&[round_seed, seed::stream::SELECT]));
        let mut scored: Vec<(f64, usize)> = alive.iter().filter_map(|c| c.last_score.map(|s| (s, c.client_id))).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        unscored.into_iter().chain(scored.into_iter().map(|(_, id)| id)).take(k).collect()
    };
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TimeSeriesFrame;

    fn client(id: usize, rows: &[[f64; 2]], labels: &[u8]) -> ClientState<f64> {
        let frame = TimeSeriesFrame::from_matrix(Matrix::from_rows(rows).unwrap(), Some(labels.to_vec())).unwrap();
        let shard = Shard {
            train: frame.clone(),
            validation: frame,
        };
        ClientState::new(id, &shard, MlpModel::zeros(&[2, 2, 1]).unwrap(), 1.0, 5).unwrap()
    }

    fn fleet(scores: &[Option<f64>]) -> Vec<ClientState<f64>> {
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let mut c = client(i, &[[0.0, 0.0], [1.0, 1.0]], &[0, 1]);
                c.last_score = s;
                c
            })
            .collect()
    }

    #[test]
    fn beta_counts_correct_validation_rows() {
        // zero model predicts 0.5 -> class 1 everywhere
        let c = client(0, &[[0.0, 0.0], [1.0, 1.0]], &[1, 1]);
        assert_eq!(compute_beta(&c).unwrap(), 1.0);
        let mut c = client(0, &[[0.0, 0.0], [1.0, 1.0]], &[1, 1]);
        // hand-set: p = sigmoid(10 * (x0 - 0.5)) -> 0.9933 and 0.0067 for rows (1,.) and (0,.)
        c.model = MlpModel::zeros(&[2, 1, 1]).unwrap();
        c.model.set_layer(0, &[1.0, 0.0], &[0.0]).unwrap();
        c.model.set_layer(1, &[10.0], &[-5.0]).unwrap();
        assert_eq!(compute_beta(&c).unwrap(), 0.5);
    }

    #[test]
    fn sigma_is_mean_column_variance() {
        let c = client(0, &[[0.0, 1.0], [2.0, 1.0]], &[0, 1]);
        // variances 1 and 0
        assert_eq!(c.sigma(), 0.5);
    }

    #[test]
    fn window_is_bounded() {
        let mut c = client(0, &[[0.0, 0.0]], &[0]);
        c.window_len = 3;
        for p in [0.1, 0.2, 0.3, 0.4] {
            c.record_prediction(p);
        }
        assert_eq!(c.window(), vec![0.2, 0.3, 0.4]);
    }

    #[test]
    fn selection_examples() {
        let f = fleet(&[Some(0.9), Some(0.5), Some(0.9)]);
        assert_eq!(select_nodes(&f, 2, 0).unwrap(), vec![0, 2]);
        assert_eq!(select_nodes(&f, 5, 0).unwrap(), vec![0, 1, 2]);

        let mut f = fleet(&[None; 6]);
        let a = select_nodes(&f, 3, 42).unwrap();
        assert_eq!(a, select_nodes(&f, 3, 42).unwrap());
        assert_eq!(a.len(), 3);
        // some seed picks a different subset
        assert!((0..20).any(|s| select_nodes(&f, 3, s).unwrap() != a));

        for c in &mut f {
            c.alive = false;
        }
        assert!(matches!(select_nodes(&f, 1, 0), Err(FlError::NoAliveClients)));
        f[4].alive = true;
        assert_eq!(select_nodes(&f, 3, 0).unwrap(), vec![4]);
    }

    #[test]
    fn unscored_clients_are_explored_first() {
        let f = fleet(&[Some(0.9), None, Some(0.1)]);
        assert_eq!(select_nodes(&f, 2, 7).unwrap(), vec![0, 1]);
    }
}
