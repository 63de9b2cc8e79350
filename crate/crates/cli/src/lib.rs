//! Command-line driver: configuration loading, the `run`, `mms`, `galerkin`,
//! `verify`, `bench` and `describe` subcommands, and the VTK/CSV writers.

pub mod commands;
pub mod output;

pub use commands::{main_with_args, Cli, Command};

use pfsi_galerkin::GalerkinError;
use pfsi_verify::VerifyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pfsi_core::Error),
    #[error(transparent)]
    Galerkin(#[from] GalerkinError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{0}")]
    Usage(String),
    #[error("{failed} invariant check(s) failed")]
    Invariants { failed: usize },
}

impl CliError {
    /// `2` for problems with the invocation or configuration, `1` otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(pfsi_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}
