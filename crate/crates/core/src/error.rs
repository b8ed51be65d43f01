use crate::data::DataError;
use crate::fault::FaultError;
use crate::fl::FlError;
use crate::metrics::MetricsError;
use crate::nn::NnError;
use crate::scenario::ConfigError;
use crate::som::SomError;

/// Any failure surfaced by the pipelines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Som(#[from] SomError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Fl(#[from] FlError),
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for problems with the configuration or its referenced inputs.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Self::Config(_)
                | Self::Data(DataError::InvalidConfig(_))
                | Self::Som(SomError::InvalidConfig(_))
                | Self::Nn(NnError::InvalidConfig(_))
                | Self::Fault(FaultError::InvalidPolicy(_)
                        | FaultError::InvalidRate(_)
                        | FaultError::EmptyGrid
                        | FaultError::IntervalOutOfRange { .. })
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
