use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, CeaError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CeaError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("merge error: {0}")]
    Merge(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("value set error: {0}")]
    ValueSet(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("rank deficient design, collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("no convergence after {iterations} iterations: {context}")]
    Convergence {
        iterations: usize,
        context: String,
        last_iterate: Vec<f64>,
    },
    #[error("imputed sets carry no observed/imputed mask")]
    MissingMask,
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data or configuration.
    Validation,
    /// A numerical routine failed (singular system, no convergence).
    Numerical,
}

impl CeaError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CeaError::RankDeficient { .. } | CeaError::Singular(_) | CeaError::Convergence { .. } => {
                ErrorClass::Numerical
            }
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        CeaError::Validation(msg.into())
    }
}
