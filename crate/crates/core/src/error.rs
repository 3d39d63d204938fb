//! Error type shared across the toolkit.

/// Errors produced by construction and numeric routines.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Matrix dimension below the two-antenna minimum.
    #[error("matrix dimension {0} is invalid; need M >= 2")]
    BadDim(usize),

    /// Shapes of two operands do not agree.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// Input failed the positive-definiteness check.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// Iterative eigensolver did not converge.
    #[error("eigensolver failed to converge")]
    ConvergenceFailure,

    /// Ratio requested with a zero denominator.
    #[error("division by zero: {0}")]
    DivisionByZero(String),
}

pub type Result<T> = std::result::Result<T, Error>;
