//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A bracketed root search ran out of iterations. Usually signals a
    /// malformed branch (non-monotone or discontinuous).
    #[error("root finder failed to converge: {0}")]
    Convergence(String),

    /// The first branch endpoint is inconsistent with the map parameters.
    #[error("endpoint mismatch: expected {expected}, got {got} (tolerance {tol})")]
    EndpointMismatch { expected: f64, got: f64, tol: f64 },

    /// A branch violates the structural requirements (surjectivity,
    /// monotonicity, cell contiguity).
    #[error("invalid branch: {0}")]
    InvalidBranch(String),

    /// A finite mass was required but the interval carries infinite mass.
    #[error("interval mass is infinite at the requested endpoint")]
    SingularMass,

    /// Adaptive quadrature exhausted its budget without converging.
    #[error("integral did not converge: {0}")]
    NonIntegrable(String),

    /// Inverse-CDF sampling could not be set up.
    #[error("sampling failed: {0}")]
    Sampling(String),

    /// A quantity exceeded the supported arithmetic range.
    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    /// Malformed configuration (JSON map spec, observable expression, ...).
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
