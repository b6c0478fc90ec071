//! Harness for the `stlt` command: configs, runs, artifacts and checks.

pub mod config;
pub mod derivs;
pub mod plot;
pub mod run;

use std::fmt;

pub use config::{ConstraintName, RunConfig, SolverName, SynthName, SyntheticSpec};
pub use derivs::{check_derivatives, DerivReport};
pub use run::{build_problem, history_csv, load_data, run_completion, RunOutcome, HISTORY_HEADER};

/// Failures that end a command, each tied to an exit code.
#[derive(Debug)]
pub enum CliError {
    /// Malformed flags, configs or data files.
    Input(String),
    /// Solver breakdowns, failed self-checks and output I/O.
    Internal(String),
}

impl CliError {
    pub fn input(e: impl fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }

    pub fn internal(e: impl fmt::Display) -> Self {
        CliError::Internal(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "bad input: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
