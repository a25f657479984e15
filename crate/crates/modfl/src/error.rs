//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate system: {0}")]
    Degenerate(String),

    #[error("privacy budget exceeded: ledger epsilon {ledger_eps} > declared epsilon {declared_eps}")]
    BudgetExceeded { ledger_eps: f64, declared_eps: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
