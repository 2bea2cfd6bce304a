//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by validation, solvers and verification drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid exponent vector: {0}")]
    InvalidExponents(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("region error: {0}")]
    Region(String),

    #[error("cutoff unresolved by grid: {0}")]
    Cutoff(String),

    #[error("solver did not converge within {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("recursion did not stabilize within {levels} levels (max delta to target {gap:.3e})")]
    NotStabilized { levels: usize, gap: f64 },

    #[error("exponent range error: {0}")]
    Range(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed data: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
