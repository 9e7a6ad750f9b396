use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("credential error: {0}")]
    Credential(String),
    #[error("service unavailable for {url}: {reason}")]
    ServiceUnavailable { url: String, reason: String },
    #[error("degenerate contingency table: {0}")]
    DegenerateTable(String),
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("model file not found: {}", .0.display())]
    ModelNotFound(PathBuf),
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("session error: {0}")]
    Session(String),
    #[error("server startup failed: {0}")]
    Startup(String),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed TOML: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 external service, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::InvalidArgument(_)
            | Error::Validation(_)
            | Error::Credential(_)
            | Error::DegenerateTable(_)
            | Error::ZeroVariance(_)
            | Error::ModelNotFound(_)
            | Error::Stratification(_)
            | Error::Session(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Toml(_) => 2,
            Error::ServiceUnavailable { .. } | Error::Startup(_) => 3,
            Error::Model(_) => 4,
        }
    }
}
