//! Feedforward binary classifier trained locally by each federated client.
//!
//! Hidden layers are affine + ReLU with inverted dropout during training;
//! the output is a single sigmoid unit trained with binary cross-entropy and
//! Adam.

mod adam;
mod mlp;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{forward, loss_and_gradients, unflatten_params, Dropout, MlpModel, DEFAULT_HIDDEN};
pub use train::{
    classify, prediction_accuracy, train_local, LabeledSet, LocalTrainer, TrainConfig, TrainOutcome,
    TrainerSnapshot,
};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected} input features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("parameter vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("optimizer state does not match model shape")]
    ShapeMismatch,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("labels must be 0 or 1 and match the batch length")]
    InvalidLabels,
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
}
