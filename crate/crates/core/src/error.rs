//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible dimensions between operands.
    #[error("shape mismatch in {context}: {details}")]
    Shape {
        context: &'static str,
        details: String,
    },

    /// A lower bound exceeds the matching upper bound.
    #[error("invalid bounds in {context}: lower exceeds upper at index {index}")]
    Bounds {
        context: &'static str,
        index: usize,
    },

    /// A NaN or infinity showed up where finite values are required.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Non-finite value at a known iteration of an iterative procedure.
    #[error("non-finite value at iteration {iteration} of {context}")]
    NonFiniteAt {
        context: &'static str,
        iteration: usize,
    },

    /// Conjugate gradient stopped without reaching the residual tolerance.
    #[error(
        "conjugate gradient did not converge: relative residual {rel_residual:e} \
         after {iterations} iterations"
    )]
    CgNoConvergence {
        iterations: usize,
        rel_residual: f64,
    },

    /// The implicit engine was handed parameters that are not stationary.
    #[error("stationarity violated: gradient norm {grad_norm:e} exceeds tolerance {tol:e}")]
    NotStationary { grad_norm: f64, tol: f64 },

    /// Forward-mode accumulation was asked for more outer variables than its cap.
    #[error("forward-mode outer dimension {needed} exceeds cap {cap}; use reverse mode")]
    FmdCapExceeded { needed: usize, cap: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    /// An operation that needs a regularizer was called with norm `None`.
    #[error("operation requires a regularizer but the norm is None")]
    NoRegularizer,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// Malformed binary input file (IDX, CIFAR-10, ...).
    #[error("{path}: {message} (byte offset {offset})")]
    Format {
        path: String,
        message: String,
        offset: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether this error is a numerical failure (as opposed to bad inputs
    /// or configuration). Drives the CLI exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NonFiniteAt { .. }
                | Error::CgNoConvergence { .. }
                | Error::NotStationary { .. }
        )
    }
}
