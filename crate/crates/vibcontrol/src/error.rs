use thiserror::Error;

/// Errors produced by grid construction, propagation, and optimization.
#[derive(Debug, Error)]
pub enum VibError {
    /// Bad arguments, malformed tables, or violated preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical procedure failed to converge or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File or sink I/O failed.
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),

    /// An internal guarantee (e.g. monotonic convergence) was violated.
    #[error("algorithm fault: {0}")]
    AlgorithmFault(String),
}

pub type Result<T> = std::result::Result<T, VibError>;

impl VibError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        VibError::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        VibError::Numerical(msg.into())
    }
}
