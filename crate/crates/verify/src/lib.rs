//! Verification harness: manufactured solutions, refinement studies, the
//! continuous-dependence experiment, invariant suites and benchmarks.

pub mod bench;
pub mod dependence;
pub mod invariants;
pub mod mms;
pub mod order;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Core(#[from] pfsi_core::Error),
    #[error("invalid input: {0}")]
    Input(String),
}
