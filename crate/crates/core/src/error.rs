use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("eigen-solver failure: {reason} (condition report: {report})")]
    EigenSolver { reason: String, report: String },

    #[error("singular linear system while {0}")]
    Singular(&'static str),

    #[error("diffraction order {order} is not retained (retained orders -{half}..={half})")]
    OrderNotRetained { order: i32, half: usize },

    #[error("diffraction order {0} is evanescent in the output medium")]
    EvanescentOrder(i32),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("stale forward cache: {0}")]
    StaleCache(String),

    #[error("device is not binary: component {index} = {value}")]
    NotBinary { index: usize, value: f64 },

    #[error("condition (lambda = {lambda_nm} nm, theta = {theta_deg} deg) is outside the table range")]
    OutOfRange { lambda_nm: f64, theta_deg: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("checkpoint architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{0} consecutive batches failed to evaluate")]
    RepeatedFailure(usize),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
