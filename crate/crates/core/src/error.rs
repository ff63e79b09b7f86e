//! Error taxonomy shared across the crate.

use thiserror::Error;

/// Errors raised by divergence evaluation, dual solves, dynamics and oracles.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Shape or wiring mismatch: supports of different lengths, tensors with
    /// inconsistent player counts, empty particle lists.
    #[error("structural error: {0}")]
    Structural(String),

    /// Input outside the mathematical domain of an operation: absolute
    /// continuity violated, multiplier below its floor, generator evaluated
    /// at a boundary point.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quantity that must hold by construction failed its check, which
    /// signals an inaccurate upstream solve rather than bad input.
    #[error("consistency error: {0}")]
    Consistency(String),

    /// Numerical integration left the finite range or exceeded its stiffness
    /// budget; shorten the horizon or cap the time scaling.
    #[error("integration error: {0}")]
    Integration(String),

    /// A learning run produced non-finite iterates.
    #[error("run error: {0}")]
    Run(String),
}

pub type Result<T> = std::result::Result<T, Error>;
