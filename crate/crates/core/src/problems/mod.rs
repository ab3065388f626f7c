//! Objectives in empirical-risk form `L(w) = (1/N) Σ ℓᵢ(w)`.
//!
//! Every objective exposes the mean loss and gradient over an arbitrary
//! index subset; the full objective is the subset `0..N`. Problems that are
//! not sums over samples (Rosenbrock) report `N = 1`.

mod data;
mod functions;
mod lenet;
mod mlp;

pub use data::{load_idx, load_mnist_dir, parse_idx, synthetic_digits, Dataset};
pub use functions::{Logistic, Quadratic, Rosenbrock};
pub use lenet::{lenet5, param_count, Layer};
pub use mlp::{cross_entropy, log_softmax, softmax, Mlp, MlpSpec};

use thiserror::Error;

use crate::{Error, Result};

/// Loss and gradient at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Differentiable objective over `dim()` parameters and `num_samples()` terms.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn num_samples(&self) -> usize;

    /// Mean loss and gradient over the terms in `batch`.
    fn eval_batch(&self, w: &[f64], batch: &[usize]) -> Result<Evaluation>;

    /// Mean loss and gradient over all terms.
    fn eval(&self, w: &[f64]) -> Result<Evaluation> {
        let all: Vec<usize> = (0..self.num_samples()).collect();
        self.eval_batch(w, &all)
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn num_samples(&self) -> usize {
        (**self).num_samples()
    }

    fn eval_batch(&self, w: &[f64], batch: &[usize]) -> Result<Evaluation> {
        (**self).eval_batch(w, batch)
    }

    fn eval(&self, w: &[f64]) -> Result<Evaluation> {
        (**self).eval(w)
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("bad IDX magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("probabilities do not form a simplex (sum = {sum})")]
    BadSimplex { sum: f64 },
    #[error("unknown layer description `{0}`")]
    UnknownLayer(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sample index {index} out of range for {len} samples")]
    SampleOutOfRange { index: usize, len: usize },
    #[error("invalid map: {0}")]
    InvalidMap(String),
}

/// Validates the parameter length and batch indices shared by all objectives.
pub(crate) fn check_args(dim: usize, n: usize, w: &[f64], batch: &[usize]) -> Result<()> {
    if w.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: w.len(),
        });
    }
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if let Some(&index) = batch.iter().find(|&&i| i >= n) {
        return Err(DataError::SampleOutOfRange { index, len: n }.into());
    }
    Ok(())
}

/// Largest relative central-difference error over the given coordinates.
///
/// Step `h = 1e-5·(1 + |wᵢ|)`; error is `|fd − gᵢ| / max(1, |fd|, |gᵢ|)`.
pub fn finite_difference_error(
    f: impl Fn(&[f64]) -> Result<f64>,
    w: &[f64],
    grad: &[f64],
    coords: &[usize],
) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut probe = w.to_vec();
    for &i in coords {
        let h = 1e-5 * (1.0 + w[i].abs());
        probe[i] = w[i] + h;
        let up = f(&probe)?;
        probe[i] = w[i] - h;
        let down = f(&probe)?;
        probe[i] = w[i];
        let fd = (up - down) / (2.0 * h);
        let scale = 1f64.max(fd.abs()).max(grad[i].abs());
        worst = worst.max((fd - grad[i]).abs() / scale);
    }
    Ok(worst)
}
