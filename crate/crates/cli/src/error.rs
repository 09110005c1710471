use std::fmt;

use cspbart_core::ErrorCategory;

/// A failure with the process exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub category: ErrorCategory,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { category: ErrorCategory::Usage, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { category: ErrorCategory::Data, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { category: ErrorCategory::Numerical, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category {
            ErrorCategory::Usage => 1,
            ErrorCategory::Data => 2,
            ErrorCategory::Numerical => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<cspbart_core::Error> for CliError {
    fn from(e: cspbart_core::Error) -> Self {
        Self { category: e.category(), message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(format!("malformed model file: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
