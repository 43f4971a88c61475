use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("operator is not self-adjoint (deviation {deviation:.3e}, allowed {allowed:.3e})")]
    NotSelfAdjoint { deviation: f64, allowed: f64 },

    #[error("index {index} out of range 0..={max}")]
    OutOfRange { index: usize, max: usize },

    #[error("resource budget exceeded: {requested} rows requested, limit {limit}")]
    BudgetExceeded { requested: usize, limit: usize },

    #[error("input must be non-zero")]
    ZeroInput,

    #[error("spectral cut at level 1 is not aligned: achievable mass {achievable}, residual {residual:.3e}")]
    CutNotAlignable { achievable: f64, residual: f64 },

    #[error("block masses cannot be represented in a matrix model: {0}")]
    Unrepresentable(String),

    #[error("parse error: {0}")]
    Parse(String),
}
