use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite feature value at instance {instance}, feature {feature}")]
    NonFinite { instance: usize, feature: usize },

    #[error("binary problem for label {label} has no instances")]
    EmptyProblem { label: usize },

    #[error(
        "solver did not converge after {iterations} iterations \
         (gradient norm {grad_norm:e}, target {target:e})"
    )]
    NotConverged {
        iterations: usize,
        grad_norm: f64,
        target: f64,
    },

    #[error("ground-truth label counts are required but were not allowed")]
    GroundTruthNotAllowed,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
