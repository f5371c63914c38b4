//! Error type shared across the simulator.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or parameter shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Argument outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input file. The message names the offending field.
    #[error("parse error: {0}")]
    Parse(String),

    /// Client and server state disagree mid-round.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The shared-feature-marginal assumption does not hold.
    #[error("assumption violation: {0}")]
    AssumptionViolation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
