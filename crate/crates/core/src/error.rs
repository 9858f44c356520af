use thiserror::Error;

use crate::model::ModelViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", join(.0))]
    InvalidModel(Vec<ModelViolation>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite passivity metric at omega = {omega}")]
    NonFiniteMetric { omega: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("oracle unavailable at this scale: problem dimension {dim} exceeds limit {limit}")]
    OracleTooLarge { dim: usize, limit: usize },

    #[error("model file field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("malformed JSON at byte offset {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(violations: &[ModelViolation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
