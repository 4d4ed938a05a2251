use std::fmt;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config, unreadable or malformed input files.
    Usage(String),
    /// A numerical estimate collapsed.
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Degenerate(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "error: {msg}"),
            CliError::Degenerate(msg) => write!(f, "numerical degeneracy: {msg}"),
        }
    }
}

impl From<voltrace::Error> for CliError {
    fn from(e: voltrace::Error) -> Self {
        match e {
            voltrace::Error::NonPositiveVariance { .. } => CliError::Degenerate(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}
