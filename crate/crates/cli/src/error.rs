use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] bisys::Error),
}

/// Machine-readable form written to stderr on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub category: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.category(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "usage" => 2,
            "io" => 3,
            "parse" => 4,
            "numeric" => 10,
            "convergence" => 11,
            "design" => 12,
            "syntax" => 13,
            "model" => 14,
            "data" => 15,
            "anova" => 16,
            _ => 1,
        }
    }

    pub fn to_report(&self) -> ErrorReport {
        ErrorReport {
            category: self.category(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
