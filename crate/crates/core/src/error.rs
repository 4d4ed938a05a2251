use thiserror::Error;

/// Errors raised by the estimation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid class parameters: {0}")]
    InvalidClass(String),

    #[error("dispersion function violates class constraint: {0}")]
    ClassViolation(String),

    #[error("invalid interval [{a}, {b}]: need 0 <= a < b <= 1")]
    InvalidInterval { a: f64, b: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-positive cell variance {variance} in cell {cell}")]
    NonPositiveVariance { cell: usize, variance: f64 },

    #[error("malformed {what} at line {line}: {msg}")]
    Parse { what: String, line: u64, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
