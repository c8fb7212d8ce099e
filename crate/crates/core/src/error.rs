use thiserror::Error;

/// Errors raised anywhere in the simulation stack.
///
/// The variants map one-to-one onto the CLI exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numerical consistency error: {0}")]
    Numerical(String),

    #[error("no convergence after {iterations} iterations: {message}")]
    NonConvergence {
        iterations: usize,
        message: String,
        /// Objective value after every iteration.
        trace: Vec<f64>,
    },

    #[error("diagnostic: {0}")]
    Diagnostic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Json(_) | Error::Io(_) => 2,
            Error::Domain(_) | Error::Numerical(_) | Error::Diagnostic(_) => 3,
            Error::NonConvergence { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
