//! Harness errors mapped onto process exit codes.

use std::fmt;

/// Exit codes: 2 for configuration problems, 3 for data problems, 4 for
/// verification failures, 1 for anything else.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Verify(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Verify(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn verify(msg: impl Into<String>) -> Self {
        CliError::Verify(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Verify(m) => write!(f, "verification failure: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("io error: {e}"))
    }
}

impl From<fednoise_core::Error> for CliError {
    fn from(e: fednoise_core::Error) -> Self {
        use fednoise_core::Error as E;
        match e {
            E::Parse(_) | E::Io(_) => CliError::Data(e.to_string()),
            E::Domain(_) | E::Shape(_) => CliError::Config(e.to_string()),
            E::Protocol(_) | E::AssumptionViolation(_) => CliError::Other(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
