use thiserror::Error;

use crate::linalg::LinalgError;
use crate::problems::DataError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("curvature memory is empty")]
    EmptyMemory,
    #[error("dense oracle limited to n <= {cap}, got {n}")]
    DimensionTooLarge { n: usize, cap: usize },
    #[error("gradient contains non-finite entries")]
    NonFiniteGradient,
    #[error("search direction is not a descent direction (gᵀp = {slope:e})")]
    NotDescent { slope: f64 },
    #[error("predicted reduction {pred:e} is not positive")]
    NonPositivePred { pred: f64 },
    #[error("trust-region secular equation did not converge (|phi| = {residual:e})")]
    HardCaseUnresolved { residual: f64 },
    #[error("overlap index set differs from the one the previous gradient was taken on")]
    StaleOverlap,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("step size {alpha} exceeds the admissible bound {bound}")]
    StepTooLarge { alpha: f64, bound: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}
