use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate stationary state: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("state is not positive semidefinite: min eigenvalue {min_eig:.3e} below -{tol:.1e}")]
    NotPositive { min_eig: f64, tol: f64 },

    #[error("short-time formula outside its validity regime: min eigenvalue {min_eig:.3e} below -{tol:.3e}")]
    Validity { min_eig: f64, tol: f64 },

    #[error("negative quantum Fisher information {0:.3e} (step too large or non-smooth family)")]
    NegativeQfi(f64),

    #[error("size guard exceeded: {what} = {value} > {limit}")]
    Guard { what: &'static str, value: usize, limit: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
