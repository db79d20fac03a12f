use std::io;
use std::path::PathBuf;

use stldec::scenario::ScenarioError;
use stldec::sim::{RunError, Stage};
use thiserror::Error;

pub const EXIT_INPUT: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_VIOLATION: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{}: {message}", path.display())]
    Trajectory { path: PathBuf, message: String },
    #[error("{0}")]
    Tasks(String),
    #[error("{0}")]
    Usage(String),
    #[error("{stage} stage failed: {error}")]
    Run { stage: &'static str, error: RunError },
    #[error("{0}")]
    Violation(String),
}

impl From<RunError> for CliError {
    fn from(error: RunError) -> Self {
        let stage = match error.stage() {
            Stage::Rewrite => "rewrite",
            Stage::Decompose => "decompose",
            Stage::Synthesize => "synthesize",
            Stage::Plan => "plan",
            Stage::Evaluate => "evaluate",
        };
        CliError::Run { stage, error }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Run { error, .. } if error.is_infeasible() => EXIT_INFEASIBLE,
            CliError::Run {
                error: RunError::Consistency(_),
                ..
            } => EXIT_VIOLATION,
            CliError::Violation(_) => EXIT_VIOLATION,
            _ => EXIT_INPUT,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Json { path, source }
    }

    pub fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Csv { path, source }
    }
}
