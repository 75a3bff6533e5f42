//! Error type carrying the process exit code.

use std::fmt;

use cortexforge::Error;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_NETWORK: i32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    pub fn network(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NETWORK,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Geometry(_) | Error::Config(_) | Error::Argument(_) => EXIT_USAGE,
            Error::Data(_) | Error::Checkpoint(_) | Error::Io(_) => EXIT_DATA,
            Error::NonFinite(_) => EXIT_RUNTIME,
            Error::Network(_) | Error::Wire(_) => EXIT_NETWORK,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Conversion for socket-facing code, where I/O failures are network
/// failures.
pub fn net_err(e: Error) -> CliError {
    match e {
        Error::Io(io) => CliError::network(io.to_string()),
        other => other.into(),
    }
}
