//! Federated rounds over simulated clients.
//!
//! Each round selects clients, broadcasts the global model, trains locally
//! under the round's fault events, weights the contributors by
//! `beta * gamma * delta` (validation accuracy, sensor reliability,
//! prediction stability) or by shard size, and aggregates.

mod client;
mod experiment;
mod round;
mod shard;
mod weights;

pub use client::{compute_beta, mean_sensor_variance, select_nodes, ClientState, DEFAULT_STABILITY_WINDOW};
pub use experiment::{run_experiment, run_prepared, ExperimentResult, ExperimentSummary, Federation};
pub use round::{
    evaluate, run_round, Aggregation, ClientRoundStats, DropEvent, FederationConfig, RecoveryEvent, RecoverySettings,
    RoundReport,
};
pub use shard::{partition_shards, PartitionStrategy, Shard, TRAIN_FRACTION};
pub use weights::{
    aggregate, compute_alpha, compute_delta, compute_gamma, fedavg_aggregate, WeightFactors, ALPHA_SUM_TOLERANCE,
};

use crate::data::DataError;
use crate::fault::FaultError;
use crate::metrics::MetricsError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum FlError {
    #[error("{clients} clients need at least {} rows, frame has {rows}", clients * 4)]
    TooManyClients { clients: usize, rows: usize },
    #[error("client {0} has an empty validation split")]
    EmptyValidation(usize),
    #[error("reference variance must be positive, got {0}")]
    NonPositiveSigmaRef(f64),
    #[error("no participating clients")]
    NoParticipants,
    #[error("no alive clients to select from")]
    NoAliveClients,
    #[error("weight factors must be finite and non-negative")]
    InvalidFactors,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("aggregation weights sum to {0}, not 1")]
    AlphaSum(f64),
    #[error("total shard size is zero")]
    EmptyShard,
    #[error("global test set is empty")]
    EmptyTestSet,
    #[error("model dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid federation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
}
