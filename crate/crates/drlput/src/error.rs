use thiserror::Error;

/// Crate-wide error type. The `Display` form is prefixed with a stable
/// category token (`CONFIG/`, `IO/`, `SCHEMA/`, `NUMERIC/`) that the CLI
/// maps to exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("CONFIG/{0}")]
    Config(String),
    #[error("IO/{0}")]
    Io(String),
    #[error("SCHEMA/{0}")]
    Schema(String),
    #[error("NUMERIC/{0}")]
    Numeric(String),
}

impl Error {
    /// Process exit code for this error: 2 for input/validation problems,
    /// 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema(_) => 2,
            Error::Io(_) | Error::Numeric(_) => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
