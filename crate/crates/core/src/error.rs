use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter outside admissible set: {0}")]
    Domain(String),

    #[error("eigensolver failed to converge after {iterations} iterations (worst residual {worst_residual:.3e})")]
    SolverFailure {
        iterations: usize,
        worst_residual: f64,
    },

    #[error("matrix is not positive definite: {0}")]
    Definiteness(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
