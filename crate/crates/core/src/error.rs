use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable index {index} out of range for {num_vars} variables")]
    IndexOutOfRange { index: usize, num_vars: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph contains a directed cycle")]
    Cyclic,

    #[error("partially directed graph admits no consistent DAG extension")]
    NotExtendable,

    #[error("inconsistent accumulated marks for cluster of variable {target}")]
    InconsistentMarks { target: usize },

    #[error("problem with {num_vars} variables exceeds the limit of {limit}")]
    TooLarge { num_vars: usize, limit: usize },

    #[error("cluster of variable {target} has {size} variables, limit is {limit}")]
    ClusterTooLarge {
        target: usize,
        size: usize,
        limit: usize,
    },

    #[error("covariance matrix has a non-positive diagonal entry at {0}")]
    SingularInput(usize),

    #[error("need at least {needed} samples, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },

    #[error("no DAG satisfies the search constraints")]
    Infeasible,

    #[error("search exceeded its wall-clock budget")]
    Timeout,

    #[error("invalid search constraints: {0}")]
    InvalidConstraints(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used in CLI error JSON and FFI status mapping.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Cyclic => "cyclic",
            Error::NotExtendable => "not_extendable",
            Error::InconsistentMarks { .. } => "inconsistent_marks",
            Error::TooLarge { .. } => "too_large",
            Error::ClusterTooLarge { .. } => "cluster_too_large",
            Error::SingularInput(_) => "singular_input",
            Error::NotEnoughSamples { .. } => "not_enough_samples",
            Error::Infeasible => "infeasible",
            Error::Timeout => "timeout",
            Error::InvalidConstraints(_) => "invalid_constraints",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
