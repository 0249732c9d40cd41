//! Command-line driver, file formats and experiment plumbing around
//! `dcreg-core`: TOML run configurations with override flags, binary
//! checkpoint/vector/PGM formats, CSV reports and reproducibility manifests.

pub mod commands;
pub mod config;
pub mod formats;
pub mod manifest;
pub mod presets;

/// Process exit codes used by every subcommand.
pub mod exit_codes {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const MISSING_ARTIFACT: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

/// Top-level error with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError {
            code: exit_codes::CONFIG,
            message: msg.into(),
        }
    }

    pub fn missing(msg: impl Into<String>) -> Self {
        CliError {
            code: exit_codes::MISSING_ARTIFACT,
            message: msg.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError {
            code: exit_codes::NUMERICAL,
            message: msg.into(),
        }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: msg.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<dcreg_core::CoreError> for CliError {
    fn from(e: dcreg_core::CoreError) -> Self {
        use dcreg_core::CoreError::*;
        match &e {
            ShapeMismatch { .. } | Contract { .. } => CliError::config(e.to_string()),
            NonFinite { .. } | Hypothesis { .. } => CliError::numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
