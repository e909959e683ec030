use std::path::PathBuf;

use thiserror::Error;

use crate::elliptic::SolveReport;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: expected d={expected_d} n={expected_n}, got d={got_d} n={got_n}")]
    GridMismatch {
        expected_d: usize,
        expected_n: usize,
        got_d: usize,
        got_n: usize,
    },

    #[error("decode error at byte offset {offset}: {message}")]
    Decode { offset: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV: {message}")]
    Csv { path: PathBuf, message: String },

    #[error(
        "solver did not converge in {} iterations (relative residual {:.3e})",
        .0.iterations,
        .0.final_relative_residual
    )]
    NotConverged(SolveReport),

    #[error("solver produced a non-finite value at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the forward solve (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CoreError::NotConverged(_) | CoreError::NonFinite { .. } | CoreError::NotPositiveDefinite(_)
        )
    }
}
