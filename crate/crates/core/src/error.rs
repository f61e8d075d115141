use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("zero norm: {0}")]
    ZeroNorm(&'static str),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("rank deficient: column {column} has negligible norm after orthogonalization")]
    RankDeficient { column: usize },

    #[error("estimate column {0} is zero; its scale projection is undefined")]
    ZeroColumn(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("all measurements are zero")]
    ZeroData,

    #[error("iterations diverged at t = {iteration} (cost no longer finite or basis collapsed)")]
    Diverged { iteration: usize },
}

pub type Result<T> = std::result::Result<T, LpsError>;

pub(crate) fn dim_err(msg: impl Into<String>) -> LpsError {
    LpsError::DimensionMismatch(msg.into())
}
