//! Limited-memory quasi-Newton optimization.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: Householder QR, symmetric eigensolver and small LU solves.
//! - [`memory`]: the rolling store of curvature pairs `(s, y)` and the compact
//!   representation `B = γI + Ψ M Ψᵀ`, plus dense BFGS oracles.
//! - [`direction`]: the two-loop recursion for `p = −H g`.
//! - [`linesearch`]: Wolfe backtracking and the line-search L-BFGS driver.
//! - [`trustregion`]: the closed-form trust-region subproblem solver over the
//!   compact representation and the trust-region L-BFGS driver.
//! - [`problems`]: objectives (quadratic, Rosenbrock, logistic regression,
//!   a from-scratch MLP classifier), IDX loading and parameter counting.
//! - [`multibatch`]: overlapping multi-batch sampling, overlap curvature
//!   pairs, SGD and the L-BFGS/SGD cost model.
//! - [`rl`]: gridworlds, value iteration and Q-learning driven by
//!   multi-batch line-search L-BFGS.
//! - [`bench`]: run configuration, CSV/JSON persistence and the benchmark
//!   harness behind the `qnbench` binary.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod direction;
mod error;
pub mod linalg;
pub mod linesearch;
pub mod memory;
pub mod multibatch;
pub mod problems;
pub mod record;
pub mod rl;
pub mod trustregion;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use memory::{CompactFactors, CurvatureMemory, CurvaturePair};
pub use problems::{Evaluation, Objective};
pub use record::IterationRecord;
