use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `1 + eta` dropped to or below the vacuum threshold.
    #[error("vacuum: min(1 + eta) = {min_density:e} at index {index} (threshold {threshold:e})")]
    Vacuum {
        min_density: f64,
        index: usize,
        threshold: f64,
    },

    #[error("elliptic solve failed: residual {residual:e} exceeds tolerance {tol:e}")]
    Solve { residual: f64, tol: f64 },

    #[error("blow-up: {0}")]
    Blowup(String),

    /// The time step violates the explicit stability guard.
    #[error("dt = {dt:e} exceeds the CFL limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
