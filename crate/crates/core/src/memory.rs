//! Curvature-pair memory and the compact L-BFGS representation.
//!
//! The memory keeps the `m` most recent accepted pairs `(s, y)`, oldest
//! first. From them it produces either the compact factors
//! `B = γI + Ψ M Ψᵀ` with `Ψ = [γS  Y]` and
//!
//! ```text
//! M⁻¹ = [ −γ SᵀS   −L ]
//!       [ −Lᵀ       D ]      SᵀY = L + D + U
//! ```
//!
//! or, for testing, the dense matrices obtained by running the BFGS update
//! (and its inverse) pair by pair from `γI`.

use std::collections::VecDeque;

use crate::linalg::{axpy, dot, norm, DenseMatrix, Lu};
use crate::{Error, Result};

/// Default acceptance threshold on `sᵀy / (‖s‖‖y‖)`.
pub const DEFAULT_EPS_CURV: f64 = 1e-8;
/// Default number of stored pairs.
pub const DEFAULT_MEMORY: usize = 20;
/// Largest dimension the dense oracles accept.
pub const DENSE_ORACLE_CAP: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    sy: f64,
    yy: f64,
}

impl CurvaturePair {
    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// `sᵀy`, strictly positive for stored pairs.
    pub fn sy(&self) -> f64 {
        self.sy
    }

    pub fn yy(&self) -> f64 {
        self.yy
    }
}

/// Rolling store of the `m` most recent accepted curvature pairs.
#[derive(Debug, Clone)]
pub struct CurvatureMemory {
    pairs: VecDeque<CurvaturePair>,
    capacity: usize,
    dim: usize,
}

impl CurvatureMemory {
    /// Memory for `dim`-dimensional parameters holding at most `capacity` pairs.
    ///
    /// Panics if `capacity == 0`.
    pub fn new(dim: usize, capacity: usize) -> Self {
        assert!(capacity > 0, "memory size must be positive");
        Self {
            pairs: VecDeque::with_capacity(capacity),
            capacity,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs from oldest to newest.
    pub fn pairs(&self) -> impl DoubleEndedIterator<Item = &CurvaturePair> + ExactSizeIterator {
        self.pairs.iter()
    }

    pub fn latest(&self) -> Option<&CurvaturePair> {
        self.pairs.back()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` iff `sᵀy > eps_curv·‖s‖·‖y‖`, evicting the oldest pair
    /// when full. Returns whether the pair was stored.
    pub fn try_accept_pair(&mut self, s: &[f64], y: &[f64], eps_curv: f64) -> Result<bool> {
        for v in [s, y] {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
        }
        let sy = dot(s, y);
        let yy = dot(y, y);
        let threshold = eps_curv * norm(s) * yy.sqrt();
        if !(sy > threshold) || !sy.is_finite() || !yy.is_finite() {
            return Ok(false);
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(CurvaturePair {
            s: s.to_vec(),
            y: y.to_vec(),
            sy,
            yy,
        });
        Ok(true)
    }

    /// `γ = yᵀy / yᵀs` of the newest pair, or 1 when empty.
    pub fn gamma(&self) -> f64 {
        self.latest().map_or(1.0, |p| p.yy / p.sy)
    }

    /// Compact factors of the current L-BFGS matrix.
    pub fn compact_rep(&self) -> Result<CompactFactors> {
        if self.is_empty() {
            return Err(Error::EmptyMemory);
        }
        Ok(self.factors())
    }

    /// Like [`compact_rep`](Self::compact_rep) but yields `B = γI` (with
    /// `γ = 1`) for an empty memory.
    pub fn factors(&self) -> CompactFactors {
        let n = self.dim;
        let k = self.len();
        let gamma = self.gamma();
        let mut psi = DenseMatrix::zeros(n, 2 * k);
        for i in 0..n {
            for (j, p) in self.pairs.iter().enumerate() {
                psi[(i, j)] = gamma * p.s[i];
                psi[(i, k + j)] = p.y[i];
            }
        }
        let mut m_inv = DenseMatrix::zeros(2 * k, 2 * k);
        for (i, pi) in self.pairs.iter().enumerate() {
            for (j, pj) in self.pairs.iter().enumerate() {
                m_inv[(i, j)] = -gamma * dot(&pi.s, &pj.s);
                if i > j {
                    // L = strictly lower part of SᵀY
                    let l = dot(&pi.s, &pj.y);
                    m_inv[(i, k + j)] = -l;
                    m_inv[(k + j, i)] = -l;
                }
            }
            m_inv[(k + i, k + i)] = pi.sy;
        }
        CompactFactors { psi, m_inv, gamma }
    }

    fn check_dense_cap(&self) -> Result<()> {
        if self.dim > DENSE_ORACLE_CAP {
            return Err(Error::DimensionTooLarge {
                n: self.dim,
                cap: DENSE_ORACLE_CAP,
            });
        }
        Ok(())
    }

    /// Dense BFGS matrix: starts from `γI` and applies
    /// `B ← B − (Bs)(Bs)ᵀ/(sᵀBs) + yyᵀ/(yᵀs)` oldest to newest.
    pub fn bfgs_dense(&self) -> Result<DenseMatrix> {
        self.check_dense_cap()?;
        let n = self.dim;
        let mut b = DenseMatrix::identity(n).scale(self.gamma());
        for p in &self.pairs {
            let bs = b.matvec(&p.s);
            let sbs = dot(&p.s, &bs);
            b = DenseMatrix::from_fn(n, n, |i, j| {
                b[(i, j)] - bs[i] * bs[j] / sbs + p.y[i] * p.y[j] / p.sy
            });
        }
        Ok(b)
    }

    /// Dense inverse BFGS matrix: starts from `γ⁻¹I` and applies
    /// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`, `ρ = 1/yᵀs`, oldest to newest.
    pub fn hessian_inverse_dense(&self) -> Result<DenseMatrix> {
        self.check_dense_cap()?;
        let n = self.dim;
        let mut h = DenseMatrix::identity(n).scale(1.0 / self.gamma());
        for p in &self.pairs {
            let rho = 1.0 / p.sy;
            let left = DenseMatrix::from_fn(n, n, |i, j| {
                f64::from(u8::from(i == j)) - rho * p.s[i] * p.y[j]
            });
            let mut next = left.matmul(&h).matmul(&left.transpose());
            for i in 0..n {
                for j in 0..n {
                    next[(i, j)] += rho * p.s[i] * p.s[j];
                }
            }
            h = next;
        }
        Ok(h)
    }
}

/// `B = γI + Ψ M Ψᵀ`, with the middle matrix kept in inverse form.
#[derive(Debug, Clone)]
pub struct CompactFactors {
    /// `Ψ = [γS  Y]`, `n × 2k`.
    pub psi: DenseMatrix,
    /// `M⁻¹`, `2k × 2k` symmetric. Solved against, never inverted.
    pub m_inv: DenseMatrix,
    pub gamma: f64,
}

impl CompactFactors {
    /// `B = γI`.
    pub fn scaled_identity(n: usize, gamma: f64) -> Self {
        Self {
            psi: DenseMatrix::zeros(n, 0),
            m_inv: DenseMatrix::zeros(0, 0),
            gamma,
        }
    }

    pub fn dim(&self) -> usize {
        self.psi.rows()
    }

    /// Number of stored pairs `k` (half the column count of `Ψ`).
    pub fn num_pairs(&self) -> usize {
        self.psi.cols() / 2
    }

    /// `B v`
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        let mut out: Vec<f64> = v.iter().map(|x| self.gamma * x).collect();
        if self.psi.cols() > 0 {
            let t = self.psi.tr_matvec(v);
            let mt = Lu::factor(&self.m_inv)?.solve(&t);
            let low_rank = self.psi.matvec(&mt);
            axpy(&mut out, 1.0, &low_rank);
        }
        Ok(out)
    }

    /// `Q(p) = gᵀp + ½ pᵀBp`
    pub fn quadratic_model(&self, g: &[f64], p: &[f64]) -> Result<f64> {
        let bp = self.apply(p)?;
        Ok(dot(g, p) + 0.5 * dot(p, &bp))
    }

    /// Materializes `B` (tests and diagnostics only).
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let n = self.dim();
        let mut b = DenseMatrix::identity(n).scale(self.gamma);
        if self.psi.cols() > 0 {
            let m_psi_t = Lu::factor(&self.m_inv)?.solve_matrix(&self.psi.transpose());
            b = b.add(&self.psi.matmul(&m_psi_t));
        }
        Ok(b)
    }

    /// Removes pair `i` (columns `i` and `k + i` of `Ψ` with the matching
    /// rows and columns of `M⁻¹`). The result is the compact form of the
    /// BFGS matrix built from the remaining pairs with the same `γ`.
    pub fn without_pair(&self, i: usize) -> Self {
        let k = self.num_pairs();
        assert!(i < k, "pair index out of range");
        let keep: Vec<usize> = (0..2 * k).filter(|&c| c != i && c != k + i).collect();
        let rows: Vec<usize> = (0..self.dim()).collect();
        Self {
            psi: self.psi.select(&rows, &keep),
            m_inv: self.m_inv.select(&keep, &keep),
            gamma: self.gamma,
        }
    }
}
