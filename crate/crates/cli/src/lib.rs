//! Library side of the `nlinv` command-line tool.

pub mod commands;
pub mod config;
pub mod io;

use nonlocal_inverse::Error;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONDITIONS: i32 = 2;
    pub const NON_CONVERGENCE: i32 = 3;
    pub const INVALID_INPUT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("cannot write output: {0}")]
    Output(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => exit::INVALID_INPUT,
            CliError::Output(_) => exit::IO,
            CliError::Core(e) => match e {
                Error::NonConvergence { .. } => exit::NON_CONVERGENCE,
                Error::HNearZero { .. }
                | Error::HIdenticallyZero
                | Error::BoundaryMismatch(_)
                | Error::NonPositiveRho { .. } => exit::CONDITIONS,
                _ => exit::INVALID_INPUT,
            },
        }
    }
}
