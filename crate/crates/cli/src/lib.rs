//! Batch command surface over `logifold-core`: bundle loading, reports and
//! the `logifold` subcommands.

use std::path::PathBuf;

use thiserror::Error;

pub mod bundle;
pub mod commands;
pub mod report;

pub use bundle::{Bundle, Violation};
pub use report::Report;

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Validation,
    PropertyViolation,
    Io,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Validation => 1,
            Status::PropertyViolation => 2,
            Status::Io => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid bundle:\n{}", render_violations(.0))]
    InvalidBundle(Vec<Violation>),

    #[error("{0}")]
    Invalid(String),

    #[error("no-labels: the bundle carries no truth labels")]
    NoLabels,

    #[error("no-data: the batch is empty")]
    NoData,

    #[error(transparent)]
    Core(logifold_core::Error),
}

impl From<logifold_core::Error> for CliError {
    fn from(e: logifold_core::Error) -> Self {
        match e {
            logifold_core::Error::MissingTruth => CliError::NoLabels,
            logifold_core::Error::NoData => CliError::NoData,
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn status(&self) -> Status {
        match self {
            CliError::Io { .. } => Status::Io,
            _ => Status::Validation,
        }
    }
}

fn render_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, CliError>;
