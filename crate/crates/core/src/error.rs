use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{source_name}:{line}:{column}: syntax error: {message}")]
    Syntax {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("knowledge base: {0}")]
    Semantic(String),

    #[error("concept `{0}` is not defined in the knowledge base")]
    UnknownConcept(String),

    #[error("value {value} of concept `{concept}` is below the lowest state bound {low}")]
    OutOfRange { concept: String, value: f64, low: f64 },

    #[error("sample #{index} of `{concept}` for entity `{entity}`: {reason}")]
    Sample {
        entity: String,
        concept: String,
        index: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("entity `{entity}` excluded: {reason}")]
    Excluded { entity: String, reason: String },

    #[error("feature `{feature}` has no value inside the matching scope of entity `{entity}`")]
    EmptyRow { entity: String, feature: String },

    #[error("feature arity mismatch: {left} vs {right}")]
    Arity { left: usize, right: usize },

    #[error("band admits no monotone warping path for lengths {m} x {n}")]
    InfeasibleBand { m: usize, n: usize },

    #[error("{0}")]
    Precondition(String),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    Data {
        path: String,
        line: usize,
        message: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
