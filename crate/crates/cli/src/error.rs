use std::fmt;

/// Failure carrying its process exit code: 1 for contract or validation
/// failures, 2 for I/O and usage problems.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn contract(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn context(self, prefix: impl fmt::Display) -> Self {
        Self {
            code: self.code,
            message: format!("{prefix}: {}", self.message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<sectsum_core::Error> for CliError {
    fn from(e: sectsum_core::Error) -> Self {
        match e {
            sectsum_core::Error::Io(_) => Self::io(e.to_string()),
            other => Self::contract(other.to_string()),
        }
    }
}
