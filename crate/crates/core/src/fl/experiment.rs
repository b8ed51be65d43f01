use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::client::{mean_sensor_variance, ClientState};
use super::round::{evaluate, run_round, FederationConfig, RecoverySettings, RoundReport};
use super::shard::{partition_shards, Shard};
use super::{Aggregation, FlError};
use crate::data::TimeSeriesFrame;
use crate::fault::{build_fault_plan, optimal_interval, CheckpointStore, CostMode, FaultPlan, WeibullModel};
use crate::matrix::Matrix;
use crate::nn::{LabeledSet, MlpModel};
use crate::scalar::Scalar;
use crate::scenario::{prepare_data, select_sensors, ScenarioConfig};
use crate::seed;
use crate::Result;

/// A scenario turned into clients, a global model and a fault plan.
#[derive(Debug, Clone)]
pub struct Federation<T> {
    pub clients: Vec<ClientState<T>>,
    pub global: MlpModel<T>,
    pub test: LabeledSet<T>,
    pub config: FederationConfig,
    pub plan: FaultPlan,
    pub n_rounds: usize,
    pub sigma_ref: f64,
    pub weibull: WeibullModel<f64>,
    /// Chosen checkpoint interval, when checkpointing is on.
    pub checkpoint_interval: Option<f64>,
    /// Sensors kept after feature selection, as indices of the input frame.
    pub sensors: Vec<usize>,
}

impl<T: Scalar> Federation<T> {
    pub fn from_scenario(scenario: &ScenarioConfig) -> Result<Self> {
        scenario.validate()?;
        let mut data = prepare_data::<T>(scenario)?;
        let sensors = select_sensors(scenario, &data)?;
        if sensors.len() < data.frame.n_sensors() {
            data.frame = data.frame.select_columns(&sensors);
            data.test = data.test.select_columns(&sensors);
        }
        let sigma_ref = mean_sensor_variance(data.baseline().values());
        if !(sigma_ref > 0.0) {
            return Err(FlError::NonPositiveSigmaRef(sigma_ref).into());
        }

        let mut shards = partition_shards(
            &data.frame,
            scenario.n_clients,
            scenario.partition,
            scenario.stream_seed(seed::stream::SHARD),
        )?;
        let degrade = &scenario.degrade;
        for &id in &degrade.client_ids {
            let s = seed::derive(&[scenario.seed, seed::stream::DEGRADE, id as u64]);
            shards[id] = degrade_shard(&shards[id], degrade.label_noise, degrade.variance_multiplier, s)?;
        }

        let dims = scenario.train.layer_dims(data.frame.n_sensors());
        let global = MlpModel::with_dims(&dims, scenario.stream_seed(seed::stream::INIT)).map_err(FlError::from)?;
        let clients = shards
            .iter()
            .enumerate()
            .map(|(id, shard)| ClientState::new(id, shard, global.clone(), sigma_ref, scenario.stability_window))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let test = LabeledSet::from_frame(&data.test).map_err(FlError::from)?;

        let ckpt = &scenario.checkpoint;
        let weibull = ckpt.weibull_model()?;
        let (recovery, checkpoint_interval) = if ckpt.enabled {
            let (t_c, _) = optimal_interval(&ckpt.policy(), &weibull)?;
            let write_cost = match ckpt.cost_mode {
                CostMode::Literal => 0.0,
                CostMode::OverheadRate { checkpoint_cost } => checkpoint_cost,
            };
            let settings =
                RecoverySettings::from_interval(t_c, ckpt.total_time, scenario.local_epochs, ckpt.recovery_time, write_cost);
            (Some(settings), Some(t_c))
        } else {
            (None, None)
        };
        let plan = build_fault_plan(
            scenario.n_clients,
            scenario.n_rounds,
            scenario.dropout_rate,
            &weibull,
            ckpt.total_time,
            scenario.stream_seed(seed::stream::FAULT),
        )?;
        let config = FederationConfig {
            aggregation: scenario.aggregation,
            local_epochs: scenario.local_epochs,
            train: scenario.train.to_train_config(scenario.local_epochs, 0),
            selection_k: scenario.selection_k(),
            round_time: ckpt.total_time,
            recovery,
            seed: scenario.seed,
        };
        Ok(Self {
            clients,
            global,
            test,
            config,
            plan,
            n_rounds: scenario.n_rounds,
            sigma_ref,
            weibull,
            checkpoint_interval,
            sensors,
        })
    }
}

/// Flips each label with probability `label_noise` and adds zero-mean
/// Gaussian noise to every sensor so that its variance within the shard half
/// grows by `variance_multiplier`.
pub fn degrade_shard<T: Scalar>(
    shard: &Shard<T>,
    label_noise: f64,
    variance_multiplier: f64,
    seed: u64,
) -> std::result::Result<Shard<T>, FlError> {
    let mut rng = seed::rng(seed);
    let mut part = |frame: &TimeSeriesFrame<T>| -> std::result::Result<TimeSeriesFrame<T>, FlError> {
        let v = frame.values();
        let noise_sd: Vec<f64> = (0..v.cols())
            .map(|j| (column_variance(v, j) * (variance_multiplier - 1.0).max(0.0)).sqrt())
            .collect();
        let mut out = v.clone();
        for i in 0..v.rows() {
            for (j, &sd) in noise_sd.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                out.set(i, j, T::of(v.get(i, j).as_f64() + sd * z));
            }
        }
        let labels: Option<Vec<u8>> = frame
            .labels()
            .map(|ls| ls.iter().map(|&y| if rng.random::<f64>() < label_noise { 1 - y } else { y }).collect());
        let (timestamps, _, names, _) = frame.clone().into_parts();
        Ok(TimeSeriesFrame::new(timestamps, out, names, labels)?)
    };
    Ok(Shard {
        train: part(&shard.train)?,
        validation: part(&shard.validation)?,
    })
}

fn column_variance<T: Scalar>(v: &Matrix<T>, j: usize) -> f64 {
    let col: Vec<f64> = v.column(j).iter().map(|x| x.as_f64()).collect();
    let n = col.len().max(1) as f64;
    let mean = col.iter().sum::<f64>() / n;
    col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundWeights {
    pub round: usize,
    pub clients: Vec<usize>,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub aggregation: Aggregation,
    pub n_clients: usize,
    pub n_rounds: usize,
    pub final_accuracy: f64,
    pub final_auc: Option<f64>,
    pub recovery_count: usize,
    pub drop_count: usize,
    pub lost_epochs: usize,
    pub empty_rounds: usize,
    pub simulated_time: f64,
    pub checkpoint_interval: Option<f64>,
    pub checkpoint_every_epochs: Option<usize>,
    pub weibull_lambda: f64,
    pub weibull_k: f64,
    pub sigma_ref: f64,
    pub round_weights: Vec<RoundWeights>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult<T> {
    pub reports: Vec<RoundReport>,
    pub summary: ExperimentSummary,
    pub global: MlpModel<T>,
    pub wall_time: Duration,
}

/// Runs every round of a prepared federation. With zero rounds the summary
/// describes the initial global model.
pub fn run_prepared<T: Scalar>(fed: &mut Federation<T>, store: &CheckpointStore) -> Result<ExperimentResult<T>> {
    let started = Instant::now();
    let mut global = fed.global.clone();
    let mut reports = Vec::with_capacity(fed.n_rounds);
    for round in 1..=fed.n_rounds {
        let faults = fed.plan.round(round);
        let (next, report) = run_round(&global, &mut fed.clients, &fed.config, &faults, store, &fed.test, round)?;
        log::debug!(
            "round {round}: {} participants, {} dropped, accuracy {:.4}",
            report.participants.len(),
            report.dropped.len(),
            report.global_accuracy
        );
        global = next;
        reports.push(report);
    }
    let (final_accuracy, final_auc) = match reports.last() {
        Some(r) => (r.global_accuracy, r.global_auc),
        None => evaluate(&global, &fed.test)?,
    };
    let summary = ExperimentSummary {
        aggregation: fed.config.aggregation,
        n_clients: fed.clients.len(),
        n_rounds: fed.n_rounds,
        final_accuracy,
        final_auc,
        recovery_count: reports.iter().map(|r| r.recoveries.len()).sum(),
        drop_count: reports.iter().map(|r| r.drops.len()).sum(),
        lost_epochs: reports
            .iter()
            .flat_map(|r| r.recoveries.iter().map(|e| e.lost_epochs).chain(r.drops.iter().map(|d| d.lost_epochs)))
            .sum(),
        empty_rounds: reports.iter().filter(|r| r.empty_round).count(),
        simulated_time: reports.iter().map(|r| r.simulated_time).sum(),
        checkpoint_interval: fed.checkpoint_interval,
        checkpoint_every_epochs: fed.config.recovery.map(|r| r.every_epochs),
        weibull_lambda: fed.weibull.lambda(),
        weibull_k: fed.weibull.k(),
        sigma_ref: fed.sigma_ref,
        round_weights: reports
            .iter()
            .map(|r| RoundWeights {
                round: r.round,
                clients: r.clients.iter().map(|c| c.client_id).collect(),
                alphas: r.clients.iter().map(|c| c.alpha).collect(),
            })
            .collect(),
    };
    Ok(ExperimentResult {
        reports,
        summary,
        global,
        wall_time: started.elapsed(),
    })
}

/// Prepares and runs a scenario in 64-bit precision with an in-memory
/// checkpoint store.
pub fn run_experiment(scenario: &ScenarioConfig) -> Result<ExperimentResult<f64>> {
    let mut fed = Federation::<f64>::from_scenario(scenario)?;
    run_prepared(&mut fed, &CheckpointStore::in_memory())
}
