use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data for label {label}: {count} sample(s), need at least {needed}")]
    InsufficientData { label: usize, count: usize, needed: usize },

    /// A user-supplied function returned a value outside its contract.
    #[error("evaluation error: {message}")]
    Evaluation { message: String },

    /// A theorem precondition on λ, δ or similar was violated.
    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("divergent: {0}")]
    Divergence(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn eval(msg: impl Into<String>) -> Self {
        Error::Evaluation { message: msg.into() }
    }

    /// True for errors caused by numerics or violated theorem preconditions,
    /// as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Evaluation { .. } | Error::Constraint(_) | Error::Divergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
