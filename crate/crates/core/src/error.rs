use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("diagonal entry {row} is not strictly positive ({value})")]
    NonPositiveDiagonal { row: usize, value: f64 },

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("zero vector")]
    ZeroVector,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix market {path}: line {line}: {msg}")]
    MatrixMarket {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("incomplete Cholesky breakdown persisted after {attempts} shifted restarts (last shift {last_shift:e})")]
    FactorizationBreakdown { attempts: usize, last_shift: f64 },

    #[error("dense oracle limited to n <= {limit}, got {n}")]
    SizeGuard { n: usize, limit: usize },

    #[error("dense eigensolver did not converge for eigenvalue {0}")]
    EigenNoConvergence(usize),
}
