//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigendecomposition did not converge for a {n}x{n} block")]
    EigenFailure { n: usize },

    #[error("unknown problem '{0}'")]
    UnknownProblem(String),

    #[error("registry integrity check failed for '{name}': {detail}")]
    RegistryIntegrity { name: String, detail: String },

    #[error("parse error at {location}: {detail}")]
    Parse { location: String, detail: String },

    #[error("subproblem solve failed ({status:?}): gradient norm {grad_norm:.3e} above tolerance {eps:.3e}")]
    SubproblemFailure {
        status: crate::subsolver::SubproblemStatus,
        grad_norm: f64,
        eps: f64,
    },

    #[error("step rejected after exhausting retry policy at outer iteration {iteration} (best step norm {step_norm:.3e} > {bound:.3e})")]
    StepRejected {
        iteration: usize,
        step_norm: f64,
        bound: f64,
    },

    #[error("reference solution required but absent on problem '{0}'")]
    MissingReference(String),

    #[error("trace too short for rate estimation: {0} usable records")]
    TraceTooShort(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(expected: usize, got: usize, what: &str) -> Self {
        Error::DimensionMismatch(format!("{what}: expected {expected}, got {got}"))
    }
}
