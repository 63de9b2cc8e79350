use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: expected {expected}, found {found}")]
    GridMismatch { expected: String, found: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{what} solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    SolverDiverged {
        what: String,
        residual: f64,
        iterations: usize,
    },

    #[error("time step {dt:.3e} violates the CFL limit; suggested dt {suggested:.3e}")]
    Cfl { dt: f64, suggested: f64 },

    #[error("non-finite values in field `{field}` at step {step}")]
    NonFinite { field: String, step: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
