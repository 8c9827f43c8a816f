use thiserror::Error;

/// Errors raised by the numerical routines and the record/grid parsers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("quadrature did not reach tolerance {tol:e} (last change {last_change:e}, {panels} panels)")]
    Convergence {
        tol: f64,
        last_change: f64,
        panels: usize,
    },

    #[error("power iteration did not converge after {iterations} iterations")]
    PowerIteration { iterations: usize },

    #[error("matrix is not positive definite (dimension {dim}), even after jitter {jitter:e}")]
    Factorization { dim: usize, jitter: f64 },

    #[error("ridge residual {residual:e} exceeds tolerance {tol:e}")]
    Residual { residual: f64, tol: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("csv parse error on line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Error {
    Error::Domain {
        op,
        msg: msg.into(),
    }
}
