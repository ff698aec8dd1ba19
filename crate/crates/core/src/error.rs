use thiserror::Error;

use crate::subsets::SubsetMask;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension {0} outside the supported range 1..=16")]
    Dimension(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
    #[error("support of the vector is not contained in {subset}")]
    SupportNotContained { subset: SubsetMask },
    #[error("invalid norm configuration: {0}")]
    InvalidNorm(String),
    #[error("invalid set function: {0}")]
    InvalidSetFunction(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("oracle accepted no samples")]
    EmptySample,
    #[error("no constructed subgradient accepted up to scale {scale}; worst residual {residual}")]
    SubgradientNotFound { scale: f64, residual: f64 },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("certificate mismatch: solver value {value} against expected {expected}")]
    CertificateMismatch { value: f64, expected: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
