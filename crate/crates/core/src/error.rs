use thiserror::Error;

use crate::expr::{DiffError, EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate coupling constant beta = {0} (beta must differ from 1 and -1)")]
    DegenerateBeta(f64),
    #[error("the as-printed dual family vanishes for q = 0 (beta = 0); use the biorthogonal family or beta != 0")]
    DegenerateDualFamily,
    #[error("mode index must be positive, got {0}")]
    ZeroMode(usize),
    #[error("invalid nonlocal parameters: {0}")]
    InvalidNonlocal(String),
    #[error("rho_k(T) = {value} <= 0 for k = {k}")]
    NonPositiveRho { k: usize, value: f64 },
    #[error("|h(t)| = {value:e} < {eps:e} at t = {t}")]
    HNearZero { t: f64, value: f64, eps: f64 },
    #[error("manufactured observation h(t) vanishes identically")]
    HIdenticallyZero,
    #[error("no convergence after {iterations} iterations (last delta {last_delta:e})")]
    NonConvergence { iterations: usize, last_delta: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("derivative unavailable: {0}")]
    MissingDerivative(String),
    #[error("boundary relations violated: {0}")]
    BoundaryMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}
