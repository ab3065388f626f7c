//! Independent dense oracles built on nalgebra, plus seeded instance
//! generators. Nothing here calls back into the crate's linear algebra.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use qnopt::linalg::DenseMatrix;
use qnopt::memory::DEFAULT_EPS_CURV;
use qnopt::{CompactFactors, CurvatureMemory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// A memory of capacity `m` over `R^n` fed `offered` pairs `y = A s + noise`
/// for a random SPD `A`. Noisy pairs may fail the curvature test, so the
/// memory can hold fewer than `min(m, offered)` pairs.
pub fn noisy_memory(seed: u64, n: usize, m: usize, offered: usize) -> CurvatureMemory {
    let mut rng = rng(seed);
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let shift = rng.random_range(0.05..1.0);
    let a = g.transpose() * &g / n as f64 + DMatrix::identity(n, n) * shift;
    let noise = rng.random_range(0.0..0.3);
    let mut mem = CurvatureMemory::new(n, m);
    for _ in 0..offered {
        let s = DVector::from_vec(random_vec(&mut rng, n));
        let y = &a * &s + DVector::from_vec(random_vec(&mut rng, n)) * noise;
        mem.try_accept_pair(s.as_slice(), y.as_slice(), DEFAULT_EPS_CURV).unwrap();
    }
    mem
}

fn pairs(mem: &CurvatureMemory) -> Vec<(DVector<f64>, DVector<f64>)> {
    mem.pairs()
        .map(|p| (DVector::from_column_slice(p.s()), DVector::from_column_slice(p.y())))
        .collect()
}

/// `γ = yᵀy / yᵀs` of the newest pair, 1 for an empty memory.
pub fn gamma(mem: &CurvatureMemory) -> f64 {
    pairs(mem).last().map_or(1.0, |(s, y)| y.dot(y) / y.dot(s))
}

/// Direct BFGS recursion from `γI`, oldest pair first.
pub fn bfgs(mem: &CurvatureMemory) -> DMatrix<f64> {
    let n = mem.dim();
    let mut b = DMatrix::identity(n, n) * gamma(mem);
    for (s, y) in pairs(mem) {
        let bs = &b * &s;
        b = &b - &bs * bs.transpose() / s.dot(&bs) + &y * y.transpose() / y.dot(&s);
    }
    b
}

/// Direct inverse BFGS recursion from `γ⁻¹I`, oldest pair first.
pub fn inverse_bfgs(mem: &CurvatureMemory) -> DMatrix<f64> {
    let n = mem.dim();
    let mut h = DMatrix::identity(n, n) / gamma(mem);
    for (s, y) in pairs(mem) {
        let rho = 1.0 / y.dot(&s);
        let v = DMatrix::identity(n, n) - &y * s.transpose() * rho;
        h = v.transpose() * &h * &v + &s * s.transpose() * rho;
    }
    h
}

/// `γI + Ψ M Ψᵀ` assembled densely, inverting `M⁻¹` with nalgebra.
pub fn compact_dense(f: &CompactFactors) -> DMatrix<f64> {
    let n = f.psi.rows();
    let psi = to_na(&f.psi);
    let mut b = DMatrix::identity(n, n) * f.gamma;
    if f.psi.cols() > 0 {
        let m = to_na(&f.m_inv).try_inverse().expect("middle matrix is invertible");
        b += &psi * m * psi.transpose();
    }
    b
}

pub fn min_eig(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.min()
}

/// `gᵀp + ½ pᵀBp`.
pub fn model(b: &DMatrix<f64>, g: &DVector<f64>, p: &DVector<f64>) -> f64 {
    g.dot(p) + 0.5 * p.dot(&(b * p))
}

/// Global minimizer of `gᵀp + ½pᵀBp` over `‖p‖ ≤ δ` from a full
/// eigendecomposition, with bisection on the secular equation.
pub fn brute_force_tr(b: &DMatrix<f64>, g: &DVector<f64>, delta: f64) -> DVector<f64> {
    let eig = SymmetricEigen::new(b.clone());
    let q = eig.eigenvectors;
    let lam = eig.eigenvalues;
    let coef = q.transpose() * g;
    let step = |sigma: f64| -> DVector<f64> {
        let mut c = DVector::zeros(lam.len());
        for i in 0..lam.len() {
            let d = lam[i] + sigma;
            c[i] = if d > 0.0 { -coef[i] / d } else { 0.0 };
        }
        &q * c
    };
    let (imin, lmin) = lam.iter().copied().enumerate().fold((0, f64::INFINITY), |a, (i, l)| if l < a.1 { (i, l) } else { a });
    let lo = (-lmin).max(0.0);
    if lmin > 0.0 && step(0.0).norm() <= delta {
        return step(0.0);
    }
    let gap = 1e-14 * (1.0 + lo);
    if step(lo + gap).norm() <= delta {
        // Hard case: pad along the leading eigenvector to reach the boundary.
        let p = step(lo);
        let tau = (delta * delta - p.norm_squared()).max(0.0).sqrt();
        return p + q.column(imin) * tau;
    }
    let (mut a, mut z) = (lo, lo + g.norm() / delta + 1.0);
    for _ in 0..300 {
        let mid = 0.5 * (a + z);
        if step(mid).norm() > delta {
            a = mid;
        } else {
            z = mid;
        }
    }
    step(z)
}
