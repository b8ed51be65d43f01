use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::client::{compute_beta, select_nodes, ClientState};
use super::weights::{aggregate, compute_alpha, compute_delta, compute_gamma, fedavg_aggregate, WeightFactors};
use super::FlError;
use crate::fault::{checkpoint_every, CheckpointRecord, CheckpointStore, FaultEvent};
use crate::metrics::{auc_roc, ScoredLabels};
use crate::nn::{classify, AdamState, LabeledSet, LocalTrainer, MlpModel, TrainConfig};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Reliability-weighted: `alpha ~ beta * gamma * delta`.
    #[default]
    Adaptive,
    /// Weights proportional to training shard size.
    Fedavg,
}

impl Aggregation {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Adaptive => "adaptive",
            Self::Fedavg => "fedavg",
        }
    }
}

/// Checkpointing during local training and the simulated clock it runs on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverySettings {
    /// Epochs between checkpoints, at least 1.
    pub every_epochs: usize,
    /// Simulated time of one local epoch.
    pub epoch_time: f64,
    /// Simulated time to bring a failed client back.
    pub recovery_time: f64,
    /// Simulated time of one checkpoint write.
    pub write_cost: f64,
}

impl RecoverySettings {
    pub fn from_interval(t_c: f64, total_time: f64, local_epochs: usize, recovery_time: f64, write_cost: f64) -> Self {
        let epoch_time = total_time / local_epochs.max(1) as f64;
        Self {
            every_epochs: checkpoint_every(t_c, epoch_time),
            epoch_time,
            recovery_time,
            write_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub aggregation: Aggregation,
    pub local_epochs: usize,
    /// Hyperparameters of local training. `max_epochs` and `seed` are
    /// replaced per round and client.
    pub train: TrainConfig,
    pub selection_k: usize,
    /// Simulated duration of the local-training window of one round.
    pub round_time: f64,
    /// `None` disables checkpointing; failed clients then restart from the
    /// global model and miss the round.
    pub recovery: Option<RecoverySettings>,
    pub seed: u64,
}

impl FederationConfig {
    fn epoch_time(&self) -> f64 {
        match self.recovery {
            Some(r) => r.epoch_time,
            None => self.round_time / self.local_epochs.max(1) as f64,
        }
    }

    fn client_seed(&self, round: usize, client: usize) -> u64 {
        seed::derive(&[self.seed, seed::stream::LOCAL_EPOCH, round as u64, client as u64])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientRoundStats {
    pub client_id: usize,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub alpha: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryEvent {
    pub client_id: usize,
    pub failure_time: f64,
    /// Epoch of the restored checkpoint; 0 means the broadcast model.
    pub restored_epoch: usize,
    pub lost_epochs: usize,
    pub skipped_checkpoints: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropEvent {
    pub client_id: usize,
    pub failure_time: f64,
    pub lost_epochs: usize,
}

/// Outcome of one federated round, one JSON line per round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: usize,
    pub selected: Vec<usize>,
    /// Clients whose parameters entered the aggregate.
    pub participants: Vec<usize>,
    pub dropped: Vec<usize>,
    pub drops: Vec<DropEvent>,
    pub recoveries: Vec<RecoveryEvent>,
    pub clients: Vec<ClientRoundStats>,
    pub global_accuracy: f64,
    pub global_auc: Option<f64>,
    /// True when no client contributed and the global model is unchanged.
    pub empty_round: bool,
    /// Simulated duration until the aggregation barrier.
    pub simulated_time: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RoundReport {
    pub fn alpha_sum(&self) -> f64 {
        self.clients.iter().map(|c| c.alpha).sum()
    }
}

/// Accuracy and AUC of `model` on `test`. AUC is `None` for a single-class
/// test set.
pub fn evaluate<T: Scalar>(model: &MlpModel<T>, test: &LabeledSet<T>) -> Result<(f64, Option<f64>), FlError> {
    if test.is_empty() {
        return Err(FlError::EmptyTestSet);
    }
    let probs = model.predict(&test.features)?;
    let hits = probs.iter().zip(&test.labels).filter(|(&p, &y)| classify(p) == y).count();
    let acc = hits as f64 / test.len() as f64;
    let auc = auc_roc(&ScoredLabels::new(probs, test.labels.clone())?).ok();
    Ok((acc, auc))
}

enum Local<T> {
    Trained {
        model: MlpModel<T>,
        adam: AdamState<T>,
        epochs_run: usize,
        time: f64,
        recovery: Option<RecoveryEvent>,
    },
    Dropped(DropEvent),
}

fn train_client<T: Scalar>(
    client: &mut ClientState<T>,
    global: &MlpModel<T>,
    config: &FederationConfig,
    event: FaultEvent,
    store: &CheckpointStore,
    round: usize,
) -> Result<Local<T>, FlError> {
    let id = client.client_id;
    let cfg = TrainConfig {
        max_epochs: config.local_epochs,
        seed: config.client_seed(round, id),
        ..config.train.clone()
    };
    let fresh = || LocalTrainer::new(global.clone(), AdamState::for_model(global), cfg.clone());
    let mut trainer = fresh()?;
    let d = config.epoch_time();
    // failure strikes while this (1-based) epoch is running
    let fail_epoch = if event.dropped && event.failure_time.is_finite() {
        Some((event.failure_time / d).floor() as usize + 1)
    } else {
        None
    };
    if config.recovery.is_some() {
        store.clear(id as u64)?;
        client.last_checkpoint = None;
    }
    let mut time = 0.0;
    let mut recovery = None;
    while !trainer.is_finished() {
        let next = trainer.epochs_run() + 1;
        if recovery.is_none() && fail_epoch == Some(next) {
            let completed = trainer.epochs_run();
            time += event.failure_time - completed as f64 * d;
            let Some(settings) = config.recovery else {
                client.alive = false;
                return Ok(Local::Dropped(DropEvent {
                    client_id: id,
                    failure_time: event.failure_time,
                    lost_epochs: completed,
                }));
            };
            let (restored_epoch, skipped) = match store.restore::<T>(id as u64) {
                Ok(r) => {
                    let ep = r.record.state.epoch;
                    trainer = LocalTrainer::from_snapshot(r.record.state, cfg.clone())?;
                    (ep, r.skipped.len())
                }
                Err(crate::fault::FaultError::NoCheckpoint(_)) => {
                    trainer = fresh()?;
                    (0, 0)
                }
                Err(e) => return Err(e.into()),
            };
            time += settings.recovery_time;
            recovery = Some(RecoveryEvent {
                client_id: id,
                failure_time: event.failure_time,
                restored_epoch,
                lost_epochs: completed - restored_epoch,
                skipped_checkpoints: skipped,
            });
            continue;
        }
        trainer.run_epoch(&client.train, &client.validation)?;
        time += d;
        if let Some(settings) = config.recovery {
            if !trainer.is_finished() && trainer.epochs_run() % settings.every_epochs == 0 {
                let record = CheckpointRecord {
                    client_id: id as u64,
                    round: round as u64,
                    state: trainer.snapshot().clone(),
                };
                client.last_checkpoint = Some(store.save(&record)?);
                time += settings.write_cost;
            }
        }
    }
    let epochs_run = trainer.epochs_run();
    let outcome = trainer.finish();
    Ok(Local::Trained {
        model: outcome.model,
        adam: outcome.adam,
        epochs_run,
        time,
        recovery,
    })
}

/// One synchronous federated round.
///
/// Selects nodes, broadcasts `global`, trains the selected clients under
/// the round's fault events (indexed by client id), weights the
/// contributors and aggregates. Returns the new global model; when nobody
/// contributes the model is returned unchanged and the report is flagged
/// `empty_round`.
pub fn run_round<T: Scalar>(
    global: &MlpModel<T>,
    clients: &mut [ClientState<T>],
    config: &FederationConfig,
    faults: &[FaultEvent],
    store: &CheckpointStore,
    test: &LabeledSet<T>,
    round: usize,
) -> Result<(MlpModel<T>, RoundReport), FlError> {
    let started = Instant::now();
    if clients.iter().any(|c| c.model.layer_dims() != global.layer_dims()) {
        return Err(FlError::DimensionMismatch {
            expected: global.n_features(),
            got: clients.first().map(|c| c.model.n_features()).unwrap_or(0),
        });
    }
    for c in clients.iter_mut() {
        c.alive = true;
    }
    let round_seed = seed::derive(&[config.seed, round as u64]);
    let selected = select_nodes(clients, config.selection_k, round_seed)?;

    let results: Vec<(usize, Local<T>)> = clients
        .par_iter_mut()
        .filter(|c| selected.binary_search(&c.client_id).is_ok())
        .map(|c| {
            let event = faults.get(c.client_id).copied().unwrap_or(FaultEvent::NONE);
            train_client(c, global, config, event, store, round).map(|r| (c.client_id, r))
        })
        .collect::<Result<_, _>>()?;

    let mut participants = Vec::new();
    let mut drops = Vec::new();
    let mut recoveries = Vec::new();
    let mut factors = Vec::new();
    let mut epochs = Vec::new();
    let mut sim_time: f64 = 0.0;
    for (id, local) in results {
        match local {
            Local::Dropped(d) => drops.push(d),
            Local::Trained {
                model,
                adam,
                epochs_run,
                time,
                recovery,
            } => {
                let c = clients.iter_mut().find(|c| c.client_id == id).expect("selected id exists");
                c.model = model;
                c.adam = adam;
                let beta = compute_beta(c)?;
                let probs = c.model.predict(&c.validation.features)?;
                let p_mean = probs.iter().map(|p| p.as_f64()).sum::<f64>() / probs.len() as f64;
                c.record_prediction(p_mean);
                let delta = compute_delta(&c.window());
                let gamma = compute_gamma(c.sigma(), c.sigma_ref)?;
                c.last_score = Some(beta * gamma * delta);
                factors.push((beta, gamma, delta));
                participants.push(id);
                epochs.push(epochs_run);
                recoveries.extend(recovery);
                sim_time = sim_time.max(time);
            }
        }
    }
    let dropped: Vec<usize> = drops.iter().map(|d| d.client_id).collect();
    let mut report = RoundReport {
        round,
        selected,
        participants: participants.clone(),
        dropped,
        drops,
        recoveries,
        clients: Vec::new(),
        global_accuracy: 0.0,
        global_auc: None,
        empty_round: participants.is_empty(),
        simulated_time: if participants.is_empty() { config.round_time } else { sim_time },
        wall_time: Duration::ZERO,
    };

    let new_global = if participants.is_empty() {
        global.clone()
    } else {
        let members: Vec<&ClientState<T>> = participants
            .iter()
            .map(|id| clients.iter().find(|c| c.client_id == *id).expect("participant exists"))
            .collect();
        let params: Vec<&[T]> = members.iter().map(|c| c.model.params()).collect();
        let (alphas, merged) = match config.aggregation {
            Aggregation::Adaptive => {
                let alphas = compute_alpha(&factors)?;
                let merged = aggregate(&params, &alphas)?;
                (alphas, merged)
            }
            Aggregation::Fedavg => {
                let sizes: Vec<usize> = members.iter().map(|c| c.shard_size()).collect();
                let total: usize = sizes.iter().sum();
                let alphas = sizes.iter().map(|&n| n as f64 / total as f64).collect();
                (alphas, fedavg_aggregate(&params, &sizes)?)
            }
        };
        report.clients = participants
            .iter()
            .zip(&factors)
            .zip(alphas.iter().zip(&epochs))
            .map(|((&client_id, &(beta, gamma, delta)), (&alpha, &epochs_run))| ClientRoundStats {
                client_id,
                beta,
                gamma,
                delta,
                alpha,
                epochs_run,
            })
            .collect();
        let mut g = global.clone();
        g.set_params(&merged)?;
        g
    };
    let (acc, auc) = evaluate(&new_global, test)?;
    report.global_accuracy = acc;
    report.global_auc = auc;
    report.wall_time = started.elapsed();
    Ok((new_global, report))
}

impl ClientRoundStats {
    pub fn factors(&self) -> WeightFactors {
        WeightFactors {
            beta: self.beta,
            gamma: self.gamma,
            delta: self.delta,
            alpha: self.alpha,
        }
    }
}
