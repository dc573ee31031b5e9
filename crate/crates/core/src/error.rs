use thiserror::Error;

use crate::instance::FractionalAllocation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance at row {row}, column {col}: {reason}")]
    InvalidInstance {
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value outside the domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("problem too large: {0}")]
    Scale(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate optimum: {0}")]
    DegenerateOptimum(String),

    #[error("solver stopped after {iterations} iterations with KKT residual {residual:.3e}")]
    Convergence {
        iterations: usize,
        residual: f64,
        best: Box<FractionalAllocation>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("linear program is {0}")]
    Lp(&'static str),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
