//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input (non-finite entries, dimension mismatch, bad parameters).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The input matrix has rows or columns that are entirely zero.
    /// Indices are zero-based in the input orientation.
    #[error("matrix has all-zero rows {rows:?} and all-zero columns {cols:?}")]
    ZeroRowOrColumn { rows: Vec<usize>, cols: Vec<usize> },

    /// A scaling-factor denominator collapsed; the matrix is numerically zero.
    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    /// An iterative solver did not reach its tolerance.
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Input exceeds the size limit of a cubic-cost oracle.
    #[error("input too large: m+n = {size} exceeds limit {limit}")]
    TooLarge { size: usize, limit: usize },

    /// Two matrices that must share a shape do not.
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    /// Requested truncation rank outside 0..=min(m, n).
    #[error("rank {rank} out of range (max {max})")]
    RankOutOfRange { rank: usize, max: usize },

    /// An operation that needs at least one value received none.
    #[error("empty input")]
    EmptyInput,

    /// A signal support too small to hold the requested rank.
    #[error("support of {support} rows/columns cannot hold rank {rank}")]
    InfeasibleSupport { support: usize, rank: usize },

    /// CSV or config parsing failure. `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for usage/precondition failures,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateMatrix(_) | Error::NoConvergence { .. } => 3,
            _ => 2,
        }
    }
}
