use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{check_args, Evaluation, Objective};
use crate::linalg::{dot, qr_thin, solve_small, DenseMatrix};
use crate::{Error, Result};

/// `ℓᵢ(w) = ½ wᵀAw − bᵢᵀw` with symmetric positive definite `A`.
///
/// The `bᵢ` average exactly to `b`, so the full objective is
/// `½ wᵀAw − bᵀw` while every sub-batch has the same Hessian `A` and a
/// perturbed linear term.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: DenseMatrix,
    b: Vec<f64>,
    /// Per-sample linear terms, empty when `N = 1`.
    samples: Vec<Vec<f64>>,
}

impl Quadratic {
    pub fn new(a: DenseMatrix, b: Vec<f64>) -> Result<Self> {
        if !a.is_square() || a.rows() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: b.len(),
            });
        }
        Ok(Self {
            a,
            b,
            samples: Vec::new(),
        })
    }

    pub fn diagonal(diag: &[f64], b: Vec<f64>) -> Result<Self> {
        Self::new(DenseMatrix::from_diag(diag), b)
    }

    /// `A = Q diag(λ … Λ) Qᵀ` with linearly spaced eigenvalues, random
    /// orthogonal `Q` and random `b`.
    pub fn with_spectrum(n: usize, lambda: f64, big_lambda: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DenseMatrix::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        let (q, _) = qr_thin(&g).expect("gaussian matrix has full rank");
        let eig: Vec<f64> = (0..n)
            .map(|i| {
                if n == 1 {
                    lambda
                } else {
                    lambda + (big_lambda - lambda) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        let mut a = q.matmul(&DenseMatrix::from_diag(&eig)).matmul(&q.transpose());
        a.symmetrize();
        let b = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        Self::new(a, b).expect("shapes agree")
    }

    /// Splits `b` into `count` samples `bᵢ = b + ξᵢ`, `ξ ~ N(0, noise²)` centered.
    pub fn with_samples(mut self, count: usize, noise: f64, seed: u64) -> Self {
        assert!(count > 0);
        let n = self.b.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xi: Vec<Vec<f64>> = (0..count)
            .map(|_| {
                (0..n)
                    .map(|_| noise * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        for j in 0..n {
            let mean = xi.iter().map(|v| v[j]).sum::<f64>() / count as f64;
            for v in &mut xi {
                v[j] -= mean;
            }
        }
        self.samples = xi
            .into_iter()
            .map(|v| v.iter().zip(&self.b).map(|(x, b)| x + b).collect())
            .collect();
        self
    }

    pub fn hessian(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn linear_term(&self) -> &[f64] {
        &self.b
    }

    /// `w* = A⁻¹ b`.
    pub fn minimizer(&self) -> Result<Vec<f64>> {
        Ok(solve_small(&self.a, &self.b)?)
    }

    /// `L(w*) = −½ bᵀA⁻¹b`.
    pub fn min_value(&self) -> Result<f64> {
        Ok(-0.5 * dot(&self.b, &self.minimizer()?))
    }

    fn batch_linear_term(&self, batch: &[usize]) -> Vec<f64> {
        if self.samples.is_empty() {
            return self.b.clone();
        }
        let mut mean = vec![0.0; self.b.len()];
        for &i in batch {
            for (m, v) in mean.iter_mut().zip(&self.samples[i]) {
                *m += v;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        mean
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn num_samples(&self) -> usize {
        self.samples.len().max(1)
    }

    fn eval_batch(&self, w: &[f64], batch: &[usize]) -> Result<Evaluation> {
        check_args(self.dim(), self.num_samples(), w, batch)?;
        let b = self.batch_linear_term(batch);
        let aw = self.a.matvec(w);
        let loss = 0.5 * dot(w, &aw) - dot(&b, w);
        let grad = aw.iter().zip(&b).map(|(x, y)| x - y).collect();
        Ok(Evaluation { loss, grad })
    }
}

/// Chained Rosenbrock `Σ 100(wᵢ₊₁ − wᵢ²)² + (1 − wᵢ)²`, minimum 0 at `(1, …, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct Rosenbrock {
    dim: usize,
}

impl Rosenbrock {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "Rosenbrock needs at least two variables");
        Self { dim }
    }

    /// The customary starting point `(−1.2, 1, −1.2, 1, …)`.
    pub fn standard_start(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| if i % 2 == 0 { -1.2 } else { 1.0 })
            .collect()
    }
}

impl Default for Rosenbrock {
    fn default() -> Self {
        Self::new(2)
    }
}

impl Objective for Rosenbrock {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_samples(&self) -> usize {
        1
    }

    fn eval_batch(&self, w: &[f64], batch: &[usize]) -> Result<Evaluation> {
        check_args(self.dim, 1, w, batch)?;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dim];
        for i in 0..self.dim - 1 {
            let t = w[i + 1] - w[i] * w[i];
            let u = 1.0 - w[i];
            loss += 100.0 * t * t + u * u;
            grad[i] += -400.0 * w[i] * t - 2.0 * u;
            grad[i + 1] += 200.0 * t;
        }
        Ok(Evaluation { loss, grad })
    }
}

/// L2-regularized logistic regression with labels in `{−1, +1}`.
///
/// `ℓᵢ(w) = log(1 + exp(−yᵢ xᵢᵀw)) + ½ μ ‖w‖²`.
#[derive(Debug, Clone)]
pub struct Logistic {
    features: DenseMatrix,
    labels: Vec<f64>,
    l2: f64,
}

impl Logistic {
    pub const DEFAULT_L2: f64 = 1e-3;

    pub fn new(features: DenseMatrix, labels: Vec<f64>, l2: f64) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                got: labels.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            l2,
        })
    }

    /// Gaussian features labelled by the sign of a hidden linear score.
    pub fn synthetic(samples: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let features = DenseMatrix::from_fn(samples, dim, |_, _| rng.sample(StandardNormal));
        let labels = (0..samples)
            .map(|i| {
                if dot(features.row(i), &truth) >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        Self::new(features, labels, Self::DEFAULT_L2).expect("shapes agree")
    }

    /// Fraction of samples with `sign(xᵢᵀw) = yᵢ`.
    pub fn accuracy(&self, w: &[f64]) -> f64 {
        let hits = (0..self.labels.len())
            .filter(|&i| dot(self.features.row(i), w) * self.labels[i] > 0.0)
            .count();
        hits as f64 / self.labels.len() as f64
    }
}

/// `log(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Objective for Logistic {
    fn dim(&self) -> usize {
        self.features.cols()
    }

    fn num_samples(&self) -> usize {
        self.labels.len()
    }

    fn eval_batch(&self, w: &[f64], batch: &[usize]) -> Result<Evaluation> {
        check_args(self.dim(), self.num_samples(), w, batch)?;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dim()];
        for &i in batch {
            let x = self.features.row(i);
            let margin = self.labels[i] * dot(x, w);
            loss += softplus(-margin);
            let coef = -self.labels[i] * sigmoid(-margin);
            crate::linalg::axpy(&mut grad, coef, x);
        }
        let inv = 1.0 / batch.len() as f64;
        let ww = dot(w, w);
        loss = loss * inv + 0.5 * self.l2 * ww;
        for (g, wi) in grad.iter_mut().zip(w) {
            *g = *g * inv + self.l2 * wi;
        }
        Ok(Evaluation { loss, grad })
    }
}
