use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{adam_step, loss_and_gradients, AdamConfig, AdamState, Dropout, MlpModel, NnError};
use crate::data::TimeSeriesFrame;
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::seed;

/// Feature rows with 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<T> {
    pub features: Matrix<T>,
    pub labels: Vec<u8>,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn new(features: Matrix<T>, labels: Vec<u8>) -> Result<Self, NnError> {
        if labels.len() != features.rows() || labels.iter().any(|&y| y > 1) {
            return Err(NnError::InvalidLabels);
        }
        Ok(Self { features, labels })
    }

    pub fn from_frame(frame: &TimeSeriesFrame<T>) -> Result<Self, NnError> {
        let labels = frame.labels().ok_or(NnError::InvalidLabels)?.to_vec();
        Self::new(frame.values().clone(), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub dropout_rate: f64,
    /// Clamped to the training set size.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            dropout_rate: 0.4,
            batch_size: 512,
            max_epochs: 50,
            early_stop_patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.early_stop_patience == 0 {
            return bad("batch_size and early_stop_patience must be positive");
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }

    fn epoch_seed(&self, epoch: usize) -> u64 {
        seed::derive(&[self.seed, seed::stream::LOCAL_EPOCH, epoch as u64])
    }
}

/// Hard label at the 0.5 threshold.
#[inline]
pub fn classify<T: Scalar>(p: T) -> u8 {
    u8::from(p >= T::of(0.5))
}

/// Fraction of rows classified correctly in inference mode.
pub fn prediction_accuracy<T: Scalar>(model: &MlpModel<T>, set: &LabeledSet<T>) -> Result<f64, NnError> {
    if set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let probs = model.predict(&set.features)?;
    let hits = probs
        .iter()
        .zip(&set.labels)
        .filter(|(&p, &y)| classify(p) == y)
        .count();
    Ok(hits as f64 / set.len() as f64)
}

/// Complete resumable training state, the unit persisted by checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerSnapshot<T> {
    pub model: MlpModel<T>,
    pub adam: AdamState<T>,
    /// Epochs completed so far.
    pub epoch: usize,
    pub best_params: Vec<T>,
    pub best_accuracy: Option<f64>,
    pub since_improvement: usize,
    pub history: Vec<f64>,
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    /// Best-validation-accuracy snapshot (the initial model if no epoch ran).
    pub model: MlpModel<T>,
    pub adam: AdamState<T>,
    pub history: Vec<f64>,
    pub epochs_run: usize,
}

/// Epoch-at-a-time trainer with early stopping on validation accuracy.
///
/// Every epoch draws its shuffle order and dropout masks from a seed derived
/// from `(config.seed, epoch)`, so a trainer rebuilt from a snapshot
/// continues exactly as the original would have.
#[derive(Debug, Clone)]
pub struct LocalTrainer<T> {
    state: TrainerSnapshot<T>,
    config: TrainConfig,
}

impl<T: Scalar> LocalTrainer<T> {
    pub fn new(model: MlpModel<T>, adam: AdamState<T>, config: TrainConfig) -> Result<Self, NnError> {
        config.validate()?;
        if adam.len() != model.n_params() {
            return Err(NnError::ShapeMismatch);
        }
        let best_params = model.flatten_params();
        Ok(Self {
            state: TrainerSnapshot {
                model,
                adam,
                epoch: 0,
                best_params,
                best_accuracy: None,
                since_improvement: 0,
                history: Vec::new(),
                stopped: config.max_epochs == 0,
            },
            config,
        })
    }

    pub fn from_snapshot(state: TrainerSnapshot<T>, config: TrainConfig) -> Result<Self, NnError> {
        config.validate()?;
        if state.adam.len() != state.model.n_params() || state.best_params.len() != state.model.n_params() {
            return Err(NnError::ShapeMismatch);
        }
        Ok(Self { state, config })
    }

    pub fn snapshot(&self) -> &TrainerSnapshot<T> {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epochs_run(&self) -> usize {
        self.state.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.state.stopped
    }

    /// Model returned if training stopped now.
    pub fn best_model(&self) -> MlpModel<T> {
        let mut m = self.state.model.clone();
        m.params_mut().copy_from_slice(&self.state.best_params);
        m
    }

    /// Runs one epoch and returns its validation accuracy.
    pub fn run_epoch(&mut self, train: &LabeledSet<T>, val: &LabeledSet<T>) -> Result<f64, NnError> {
        if train.is_empty() || val.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        let next = self.state.epoch + 1;
        let mut rng = seed::rng(self.config.epoch_seed(next));
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let batch = self.config.batch_size.min(train.len());
        let dropout_rate = self.config.dropout_rate;
        let adam = self.config.adam();
        for chunk in order.chunks(batch) {
            let b = train.select(chunk);
            let dropout = Some(Dropout {
                rate: dropout_rate,
                seed: rng.next_u64(),
            });
            let (_, grads) = loss_and_gradients(&self.state.model, &b.features, &b.labels, dropout)?;
            adam_step(&mut self.state.model, &grads, &mut self.state.adam, &adam)?;
        }
        let acc = prediction_accuracy(&self.state.model, val)?;
        let s = &mut self.state;
        s.epoch = next;
        s.history.push(acc);
        match s.best_accuracy {
            Some(best) if acc <= best => {
                s.since_improvement += 1;
                if acc == best {
                    // latest of equally good snapshots
                    s.best_params.copy_from_slice(s.model.params());
                }
            }
            _ => {
                s.best_accuracy = Some(acc);
                s.since_improvement = 0;
                s.best_params.copy_from_slice(s.model.params());
            }
        }
        if s.since_improvement >= self.config.early_stop_patience || s.epoch >= self.config.max_epochs {
            s.stopped = true;
        }
        Ok(acc)
    }

    /// Trains until early stopping or `max_epochs`.
    pub fn run(mut self, train: &LabeledSet<T>, val: &LabeledSet<T>) -> Result<TrainOutcome<T>, NnError> {
        while !self.is_finished() {
            self.run_epoch(train, val)?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> TrainOutcome<T> {
        let model = self.best_model();
        TrainOutcome {
            model,
            adam: self.state.adam,
            history: self.state.history,
            epochs_run: self.state.epoch,
        }
    }
}

/// Trains a copy of `model` from a fresh optimizer state.
pub fn train_local<T: Scalar>(
    model: &MlpModel<T>,
    train: &LabeledSet<T>,
    val: &LabeledSet<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>, NnError> {
    if train.is_empty() || val.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    LocalTrainer::new(model.clone(), AdamState::for_model(model), config.clone())?.run(train, val)
}
