//! Crate error type. Numeric payloads are stored as `f64` regardless of the
//! scalar the computation ran in, so `Result<_, Error>` stays uniform.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("map is not monotone: min eigenvalue of symmetric part = {min_eig:.3e}")]
    NotMonotone { min_eig: f64 },

    #[error("Dykstra projection did not converge after {iters} cycles (residual {residual:.3e})")]
    DykstraNonConvergence {
        iters: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("empty halfspace: zero normal with negative offset {rhs:.3e}")]
    EmptyHalfspace { rhs: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size {gamma:.6e} exceeds admissible bound {bound:.6e} for {scheme}")]
    InadmissibleStep {
        scheme: String,
        gamma: f64,
        bound: f64,
    },

    #[error("iterate diverged at step {k}: {reason}")]
    Diverged { k: usize, reason: String },

    #[error("point is infeasible: dist to set {dist:.3e} exceeds tolerance {tol:.3e}")]
    Infeasible { dist: f64, tol: f64 },

    #[error("solver did not reach tolerance after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
