//! Line-search direction `p = −H g` by the two-loop recursion.
//!
//! `H₀ = (yᵀs / yᵀy) I` for the newest pair, i.e. the inverse of the
//! `B₀ = γI` used by the compact representation, so both strategies work
//! with the same quasi-Newton matrix.

use crate::linalg;
use crate::memory::CurvatureMemory;
use crate::{Error, Result};

/// Vector kernels used by the recursion; abstracted so tests can count calls.
trait Kernel {
    fn dot(&self, a: &[f64], b: &[f64]) -> f64;
    fn axpy(&self, y: &mut [f64], a: f64, x: &[f64]);
}

struct Plain;

impl Kernel for Plain {
    #[inline]
    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        linalg::dot(a, b)
    }

    #[inline]
    fn axpy(&self, y: &mut [f64], a: f64, x: &[f64]) {
        linalg::axpy(y, a, x)
    }
}

/// Returns `p = −H g` for the L-BFGS inverse matrix held by `mem`.
pub fn two_loop(mem: &CurvatureMemory, g: &[f64]) -> Result<Vec<f64>> {
    two_loop_with(&Plain, mem, g)
}

fn two_loop_with<K: Kernel>(kernel: &K, mem: &CurvatureMemory, g: &[f64]) -> Result<Vec<f64>> {
    if g.len() != mem.dim() {
        return Err(Error::DimensionMismatch {
            expected: mem.dim(),
            got: g.len(),
        });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }

    let mut q = g.to_vec();
    let mut alphas = vec![0.0; mem.len()];
    for (alpha, pair) in alphas.iter_mut().zip(mem.pairs()).rev() {
        *alpha = kernel.dot(pair.s(), &q) / pair.sy();
        kernel.axpy(&mut q, -*alpha, pair.y());
    }

    let h0 = 1.0 / mem.gamma();
    let mut r: Vec<f64> = q.iter().map(|v| h0 * v).collect();

    for (alpha, pair) in alphas.iter().zip(mem.pairs()) {
        let beta = kernel.dot(pair.y(), &r) / pair.sy();
        kernel.axpy(&mut r, alpha - beta, pair.s());
    }

    for v in &mut r {
        *v = -*v;
    }
    Ok(r)
}
