//! Error type shared by every module of the engine.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An integrand produced a non-finite value at the reported abscissa.
    #[error("non-finite integrand value at x = {abscissa}")]
    NonFinite { abscissa: f64 },

    /// The Newton iteration failed to reach the residual tolerance.
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A bracketing root finder was handed an interval without a sign change.
    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo:e}, f(hi) = {f_hi:e})")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    /// The moment constraints describe an empty feasible set.
    #[error("infeasible statistics: norm {norm} exceeds the gradient limit {limit}")]
    Infeasible { norm: f64, limit: f64 },

    /// A concentration bound was requested outside its hypothesis.
    #[error("hypothesis violated: alpha = {alpha} is below 2*exp(-d/16) = {floor} for d = {dim}")]
    Hypothesis { alpha: f64, floor: f64, dim: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed persisted data, with line and column when available.
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
