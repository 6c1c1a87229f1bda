//! Experiment driver: config parsing, named presets, the five subcommands,
//! and machine-readable result files (line-delimited JSON plus a CSV
//! projection for plotting).

pub mod commands;
pub mod config;
pub mod presets;
pub mod records;

use std::fmt;

use poisonlearn::Error as CoreError;

/// CLI errors; the variant determines the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or input files (exit 1).
    Config(String),
    /// Numerical failure inside the pipeline (exit 2).
    Numerical(String),
    /// A verification suite ran and failed (exit 3).
    CheckFailed(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {}", m),
            CliError::Numerical(m) => write!(f, "numerical failure: {}", m),
            CliError::CheckFailed(m) => write!(f, "check failed: {}", m),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
