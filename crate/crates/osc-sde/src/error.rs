//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by problems, schemes, and estimators.
#[derive(Error, Debug)]
pub enum OscSdeError {
    /// A state or probe point does not match the problem dimension.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A scheme produced a non-finite or absurdly large state component.
    #[error("numerical blow-up at t = {time} (step {step}): component {component} = {value}")]
    NumericalBlowUp {
        time: f64,
        step: usize,
        component: usize,
        value: f64,
    },

    /// A Monte Carlo path failed; carries the failing path index.
    #[error("path {path_index} failed: {source}")]
    PathFailure {
        path_index: usize,
        #[source]
        source: Box<OscSdeError>,
    },

    /// Invalid argument to an operation (bad ratio, empty list, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Invalid experiment configuration (unknown problem, bad grid, ...).
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A quadrature or finite-difference evaluation returned non-finite values.
    #[error("numerical evaluation failed: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OscSdeError>;

impl OscSdeError {
    /// True when the error is (or wraps) a numerical blow-up.
    pub fn is_blow_up(&self) -> bool {
        match self {
            OscSdeError::NumericalBlowUp { .. } => true,
            OscSdeError::PathFailure { source, .. } => source.is_blow_up(),
            _ => false,
        }
    }
}
