//! Library side of the `hpo` command: argument types, subcommand bodies and
//! the benchmark self-check suite.

pub mod bench;
pub mod commands;
pub mod evaluator;

use std::fmt;

/// Failure of a subcommand, carrying the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or inconsistent inputs. Exit 2.
    Config(String),
    /// Every evaluation of some generation failed. Exit 3.
    Collapse(String),
    /// Reading or writing outputs failed. Exit 1.
    Io(String),
    /// The bench suite found a failing property. Exit 1.
    BenchFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Collapse(_) => 3,
            CliError::Io(_) | CliError::BenchFailed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Collapse(m) => write!(f, "run aborted: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::BenchFailed(n) => write!(f, "{n} bench properties failed"),
        }
    }
}

impl std::error::Error for CliError {}
