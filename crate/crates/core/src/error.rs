use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("{statistic} needs at least {required} observations per sample, found {found}")]
    InsufficientSamples {
        statistic: &'static str,
        required: usize,
        found: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("bisection did not converge: {0}")]
    NonConvergence(String),

    #[error("oracle budget exceeded: {0}")]
    BudgetExceeded(String),
}
