use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("stage {got} presented out of order (expected stage {expected})")]
    OutOfOrderStage { expected: usize, got: usize },

    #[error("quantile threshold requires a stationary feature sampler")]
    NonStationarySampler,

    #[error("offline sample set is empty")]
    EmptyOfflineSet,

    #[error("episode {episode} of {algorithm}: {source}")]
    Episode {
        algorithm: String,
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// True for errors caused by the configuration rather than execution.
    pub fn is_config(&self) -> bool {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) | Error::NonStationarySampler => true,
            Error::Episode { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
