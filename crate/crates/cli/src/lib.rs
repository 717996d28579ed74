//! Library side of the soft-sensor CLI: configuration resolution, model
//! persistence and the command implementations, kept callable from tests.

use std::fmt;

pub mod commands;
pub mod config;
pub mod modelfile;
pub mod report;

pub use config::{resolve, ModelKind, Overrides, RunConfig};
pub use modelfile::ModelFile;

/// CLI-level errors carrying the process exit code policy:
/// 1 usage/config, 2 data, 3 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
    Core(softsensor_core::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CliError::Numeric(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numeric(_) => 3,
            CliError::Core(e) => match e.class() {
                softsensor_core::ErrorClass::Usage => 1,
                softsensor_core::ErrorClass::Data => 2,
                softsensor_core::ErrorClass::Numeric => 3,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Numeric(msg) => f.write_str(msg),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<softsensor_core::Error> for CliError {
    fn from(e: softsensor_core::Error) -> Self {
        CliError::Core(e)
    }
}
