use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid form specification: {0}")]
    InvalidForm(String),

    #[error("solver did not converge after {iters} iterations (residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    /// The form vanishes on a nonzero function, so no Poincaré constant exists.
    #[error("form has a nontrivial kernel (null direction {null_direction:?})")]
    KernelDetected { null_direction: Vec<f64> },

    #[error("space too large for exhaustive subset scan: n = {n} > max_n = {max_n}")]
    TooLarge { n: usize, max_n: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
