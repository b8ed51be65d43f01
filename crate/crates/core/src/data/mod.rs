//! Sensor data: frames, CSV ingestion, synthetic degradation data and the
//! preprocessing pipeline (normalization, filtering, feature selection,
//! baseline split).

mod frame;
mod importance;
mod ingest;
mod preprocess;
mod synthetic;

use std::path::PathBuf;

pub use frame::TimeSeriesFrame;
pub use importance::{permutation_importance, select_features};
pub use ingest::{ingest_csv, CsvOptions};
pub use preprocess::{
    band_pass_filter, low_pass_filter, min_max_normalize, split_baseline, MinMaxScaler,
    PreprocessConfig,
};
pub use synthetic::{generate_synthetic, generate_synthetic_replica, SyntheticSpec};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("frame has no rows")]
    EmptyFrame,
    #[error("label column `{0}` not found in header")]
    UnknownLabelColumn(String),
    #[error("timestamps decrease at row {0}")]
    NonMonotonicTime(usize),
    #[error("window {window} exceeds row count {rows}")]
    WindowExceedsLength { window: usize, rows: usize },
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("band-pass windows must satisfy 1 <= short < long (got {short}, {long})")]
    InvalidWindowOrder { short: usize, long: usize },
    #[error("frame has no labels")]
    MissingLabels,
    #[error("split fraction {fraction} leaves an empty side on {rows} rows")]
    EmptySplit { fraction: f64, rows: usize },
    #[error("invalid fraction {0}: must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("invalid frame: {0}")]
    Shape(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid preprocessing config: {0}")]
    InvalidConfig(String),
}
