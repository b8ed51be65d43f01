//! Failure modeling and fault tolerance: the Weibull failure model, the
//! checkpoint-interval cost and its grid optimizer, per-round fault plans,
//! and durable checkpoint records.

mod checkpoint;
mod plan;
mod policy;
mod weibull;

pub use checkpoint::{CheckpointRecord, CheckpointRef, CheckpointStore, Restored, SkippedRecord, SCHEMA_VERSION};
pub use plan::{build_fault_plan, FaultEvent, FaultPlan};
pub use policy::{checkpoint_cost, checkpoint_every, optimal_interval, CheckpointPolicy, CostMode};
pub use weibull::{fit_weibull, weibull_cdf, weibull_sample, WeibullModel};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum FaultError {
    #[error("invalid Weibull parameters: lambda={lambda}, k={k}")]
    InvalidWeibull { lambda: f64, k: f64 },
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("need at least two failure times")]
    InsufficientData,
    #[error("failure times are all equal; the shape estimate diverges")]
    DegenerateData,
    #[error("failure times must be positive and finite")]
    InvalidData,
    #[error("shape estimate not bracketed in [1e-3, 1e3]")]
    NoConvergence,
    #[error("checkpoint interval {t_c} outside (0, {total}]")]
    IntervalOutOfRange { t_c: f64, total: f64 },
    #[error("candidate interval grid is empty")]
    EmptyGrid,
    #[error("invalid checkpoint policy: {0}")]
    InvalidPolicy(String),
    #[error("dropout rate {0} outside [0, 1]")]
    InvalidRate(f64),
    #[error("no checkpoint found for client {0}")]
    NoCheckpoint(u64),
    #[error("checksum mismatch in {0}")]
    ChecksumMismatch(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint i/o at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
