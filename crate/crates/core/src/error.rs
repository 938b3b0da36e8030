use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    /// An argument violated its documented range or shape.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value left the mathematical domain of an operation (e.g. a
    /// candidate λ for which the Bernstein denominator is non-positive).
    #[error("domain error: {0}")]
    Domain(String),

    /// Dimension mismatch between vectors that must align.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Training aborted because parameters or losses became non-finite.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    /// A loss kind without a usable gradient was passed to a gradient path.
    #[error("loss `{0}` is evaluation-only and has no gradient")]
    NonDifferentiableLoss(String),

    /// Dataset parsing failed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Exact enumeration was requested for an instance too large to
    /// enumerate honestly.
    #[error("enumeration infeasible: {0}")]
    Infeasible(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CoreError::InvalidArgument(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        CoreError::Domain(msg.into())
    }
}
