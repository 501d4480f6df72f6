use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the planning, learning, simulation and file layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value iteration did not converge: residual {residual:e} after {iterations} sweeps")]
    NonConvergence { residual: f64, iterations: usize },

    #[error(
        "cannot bracket whittle index for state {state}: gap {gap_lower:e} at {lower} and {gap_upper:e} at {upper}"
    )]
    BracketingFailure {
        state: u8,
        lower: f64,
        upper: f64,
        gap_lower: f64,
        gap_upper: f64,
    },

    #[error("index for state {state} is not differentiable (gap slope {slope:e})")]
    DegenerateIndex { state: u8, slope: f64 },

    #[error("no visits to (state {state}, action {action}) and zero smoothing")]
    UndefinedEstimate { state: u8, action: u8 },

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("likelihood of arm {arm} underflows (probability {probability:e})")]
    DegenerateLikelihood { arm: usize, probability: f64 },

    #[error("all importance weights vanish at step {step}")]
    DegenerateWeights { step: usize },

    #[error("group `{group}` needs a trained predictor for policy {policy}")]
    MissingPredictor { group: String, policy: String },

    #[error("invalid transition model: {0}")]
    InvalidModel(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{file}: row {row}, column `{column}`: {message}")]
    SchemaViolation {
        file: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used by the command-line driver to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NonConvergence { .. }
            | Error::BracketingFailure { .. }
            | Error::DegenerateIndex { .. }
            | Error::DegenerateLikelihood { .. }
            | Error::DegenerateWeights { .. }
            | Error::UndefinedEstimate { .. } => ErrorClass::Numerical,
            Error::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
