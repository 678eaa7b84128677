use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite model output or statistic: {0}")]
    NonFiniteOutput(f64),

    #[error("non-finite difference statistic at index {index}: {value}")]
    NonFiniteStatistic { index: usize, value: f64 },

    #[error("null sample is empty (K must be at least 1)")]
    EmptyNullSample,

    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("p-value at index {index} must lie in (0, 1], got {value}")]
    InvalidPValue { index: usize, value: f64 },

    #[error("no hypotheses to test")]
    NoHypotheses,

    #[error("feature index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("feature subset {0} is empty")]
    EmptySubset(usize),

    #[error("feature subsets {first} and {second} overlap at feature {feature}")]
    OverlappingSubsets {
        first: usize,
        second: usize,
        feature: usize,
    },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("statistic {statistic} needs {needed}")]
    StatisticMismatch {
        statistic: &'static str,
        needed: &'static str,
    },

    #[error("training did not converge: held-out relative MSE {relative_mse:.5} (target {target})")]
    TrainingDidNotConverge { relative_mse: f64, target: f64 },

    #[error("model is not differentiable: {0}")]
    NotDifferentiable(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("model reported an error: {0}")]
    Model(String),

    #[error("timed out after {0:?} waiting for the external model")]
    Timeout(std::time::Duration),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: row {row}: {message}")]
    MalformedCsv {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from invalid user input rather than a runtime
    /// failure. Front ends map these to a usage exit status.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidAlpha(_)
                | Error::InvalidPValue { .. }
                | Error::NoHypotheses
                | Error::IndexOutOfRange { .. }
                | Error::EmptySubset(_)
                | Error::OverlappingSubsets { .. }
                | Error::InvalidDimension(_)
                | Error::DimensionMismatch { .. }
                | Error::StatisticMismatch { .. }
                | Error::Config(_)
                | Error::MalformedCsv { .. }
                | Error::EmptyNullSample
        )
    }
}
