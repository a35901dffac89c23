use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("duplicate index {0} in index set")]
    DuplicateIndex(usize),

    #[error("matrix is not SPD: non-positive pivot {pivot:e} at row {row}")]
    NotSpd { row: usize, pivot: f64 },

    #[error("matrix is singular to working precision (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("C-block of interpolation is singular (condition estimate {condition:e})")]
    SingularPc { condition: f64 },

    #[error("zero diagonal entry at row {0}")]
    ZeroDiagonal(usize),

    #[error("eigensolver did not converge after {iterations} iterations (max residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("empty interpolatory set for row {0}")]
    EmptyInterpolatorySet(usize),

    #[error("no invertible initial C-block found after {0} attempts")]
    NoInvertibleStart(usize),

    #[error("smoother not convergent: {0}")]
    SmootherNotConvergent(String),

    #[error("conjugate gradient breakdown at iteration {0}")]
    CgBreakdown(usize),

    #[error("size {size} exceeds dense threshold {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
