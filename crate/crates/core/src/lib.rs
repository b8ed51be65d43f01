//! Federated condition monitoring for industrial sensor fleets.
//!
//! The crate bundles the pieces of a desk-scale simulator:
//!
//! * [`data`]: sensor frames, CSV ingestion, synthetic degradation data and
//!   preprocessing.
//! * [`som`]: self-organizing map detector with a `mean + 3 std` threshold on
//!   quantization error.
//! * [`localization`]: per-sensor residual counts that rank components.
//! * [`nn`]: small feedforward classifier with Adam and inverted dropout.
//! * [`fl`]: federated rounds with reliability-weighted aggregation and a
//!   FedAvg baseline.
//! * [`fault`]: Weibull failure model, checkpoint interval optimization,
//!   fault plans and checkpoint persistence.
//! * [`metrics`]: accuracy, AUC-ROC and the Mann-Whitney U test.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod data;
pub mod fault;
pub mod fl;
pub mod localization;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod scenario;
pub mod seed;
pub mod som;

mod error;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Frame = data::TimeSeriesFrame<f64>;
pub type Frame32 = data::TimeSeriesFrame<f32>;
pub type SomMap = som::SomGrid<f64>;
pub type SomMap32 = som::SomGrid<f32>;
pub type Mlp = nn::MlpModel<f64>;
pub type Mlp32 = nn::MlpModel<f32>;
pub type Weibull = fault::WeibullModel<f64>;
pub type Client = fl::ClientState<f64>;
