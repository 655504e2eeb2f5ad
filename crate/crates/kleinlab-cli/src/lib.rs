//! Library side of the `kleinlab` command-line tool: run configuration,
//! subcommand implementations and error reporting.

pub mod commands;
pub mod config;

use serde_json::json;

/// Failures are either domain errors (exit status 1) or usage errors (2).
#[derive(Debug)]
pub enum CliError {
    Domain { kind: &'static str, message: String },
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain { .. } => 1,
            CliError::Usage(_) => 2,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Domain { kind, message } => json!({ "error": kind, "message": message }),
            CliError::Usage(message) => json!({ "error": "usage", "message": message }),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Domain { kind, message } => write!(f, "{kind}: {message}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
