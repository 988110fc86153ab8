use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid marginals: {0}")]
    InvalidMarginals(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("state space of {states} assignments exceeds the enumeration limit of {limit}")]
    StateSpaceTooLarge { states: u128, limit: u128 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
