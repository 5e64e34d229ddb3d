use std::path::PathBuf;

/// Errors produced anywhere in the fusion pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {key}: {message}")]
    Config { key: String, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("sync error: lidar t={lidar_t} radar t={radar_t} exceeds tolerance {tolerance}")]
    Sync {
        lidar_t: f64,
        radar_t: f64,
        tolerance: f64,
    },

    #[error("registration failed: {0}")]
    Registration(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input (exit code 1) rather than
    /// a failure while processing valid input (exit code 2).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Validation(_) | Error::Config { .. } | Error::Contract(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
