use std::io;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input vectors are linearly dependent")]
    DependentInput,
    #[error("value cannot be represented at p-adic precision {precision}: {what}")]
    PrecisionExceeded { precision: u32, what: String },
    #[error("operation requires d = 2, got d = {0}")]
    WrongDegree(usize),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("ball around the query point carries zero mass")]
    ZeroMass,
    #[error("fundamental-domain reduction did not converge after {0} iterations")]
    IterationCap(usize),
    #[error("matrix is not unimodular (det = {0})")]
    NonUnimodular(f64),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("pair budget of {0} insertions exceeded")]
    BudgetExceeded(u64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for errors that come from numerics rather than inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IterationCap(_)
                | Error::PrecisionExceeded { .. }
                | Error::NonUnimodular(_)
                | Error::DependentInput
                | Error::BudgetExceeded(_)
        )
    }
}
