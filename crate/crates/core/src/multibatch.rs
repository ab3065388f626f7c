//! Stochastic quasi-Newton training on overlapping batches.
//!
//! Consecutive batches share an overlap `O`; the curvature pair of a step
//! differences the gradient of that same overlap at both endpoints, so `y`
//! never mixes samples. Also home to the SGD baseline and the per-iteration
//! cost model comparing the two.

use std::time::Instant;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::direction::two_loop;
use crate::linalg::{axpy, dot, norm};
use crate::linesearch::{wolfe_search_with, WolfeParams};
use crate::memory::{CurvatureMemory, DEFAULT_EPS_CURV, DEFAULT_MEMORY};
use crate::problems::{Evaluation, Objective};
use crate::record::{Counters, IterationRecord, RunOutcome};
use crate::{Error, Result};

/// Mean gradient of one index set at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapGradient {
    pub indices: Vec<usize>,
    pub loss: f64,
    pub grad: Vec<f64>,
}

impl OverlapGradient {
    pub fn at<O: Objective + ?Sized>(oracle: &O, w: &[f64], indices: &[usize]) -> Result<Self> {
        let Evaluation { loss, grad } = oracle.eval_batch(w, indices)?;
        Ok(Self {
            indices: indices.to_vec(),
            loss,
            grad,
        })
    }

    /// `later.grad − self.grad`, refusing gradients of different index sets.
    pub fn difference(&self, later: &OverlapGradient) -> Result<Vec<f64>> {
        if self.indices != later.indices {
            return Err(Error::StaleOverlap);
        }
        Ok(later.grad.iter().zip(&self.grad).map(|(a, b)| a - b).collect())
    }
}

/// `y = ∇L^O(w_next) − ∇L^O(w)` where `prev` holds `∇L^O(w)`.
pub fn overlap_y<O: Objective + ?Sized>(
    oracle: &O,
    w_next: &[f64],
    prev: &OverlapGradient,
    overlap: &[usize],
) -> Result<Vec<f64>> {
    if prev.indices != overlap {
        return Err(Error::StaleOverlap);
    }
    prev.difference(&OverlapGradient::at(oracle, w_next, overlap)?)
}

/// `½(g_prev + g_curr)`: the mean gradient over two equal-size disjoint overlaps.
pub fn combined_gradient(g_prev: &[f64], g_curr: &[f64]) -> Vec<f64> {
    g_prev.iter().zip(g_curr).map(|(a, b)| 0.5 * (a + b)).collect()
}

/// Size-weighted mean of per-part mean losses and gradients.
pub fn weighted_mean(parts: &[(usize, &Evaluation)]) -> Evaluation {
    let total: usize = parts.iter().map(|(k, _)| k).sum();
    let mut grad = vec![0.0; parts[0].1.grad.len()];
    let mut loss = 0.0;
    for (k, e) in parts {
        let w = *k as f64 / total as f64;
        loss += w * e.loss;
        axpy(&mut grad, w, &e.grad);
    }
    Evaluation { loss, grad }
}

/// Index sets of one multi-batch iteration: `J = carried ∪ fresh`, with the
/// next overlap drawn from `fresh`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub carried: Vec<usize>,
    pub next_overlap: Vec<usize>,
    /// `fresh ∖ next_overlap`.
    pub rest: Vec<usize>,
}

impl BatchPlan {
    pub fn batch(&self) -> Vec<usize> {
        let mut all = self.carried.clone();
        all.extend(&self.next_overlap);
        all.extend(&self.rest);
        all
    }
}

/// Seeded sampler of overlapping batches over `0..n`.
#[derive(Debug, Clone)]
pub struct OverlapSampler {
    n: usize,
    batch: usize,
    overlap: usize,
    carried: Vec<usize>,
    rng: ChaCha8Rng,
}

impl OverlapSampler {
    /// Batches of `batch` indices of which `round(overlap_frac·batch)`
    /// (at least one) carry over to the next batch.
    pub fn new(n: usize, batch: usize, overlap_frac: f64, seed: u64) -> Result<Self> {
        if batch < 2 || batch > n {
            return Err(Error::Config(format!("batch size {batch} must lie in 2..={n}")));
        }
        if !(overlap_frac > 0.0 && overlap_frac <= 0.5) {
            return Err(Error::Config(format!("overlap fraction {overlap_frac} must lie in (0, 0.5]")));
        }
        let overlap = ((overlap_frac * batch as f64).round() as usize).clamp(1, batch / 2);
        Ok(Self {
            n,
            batch,
            overlap,
            carried: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn overlap_size(&self) -> usize {
        self.overlap
    }

    pub fn next_plan(&mut self) -> BatchPlan {
        let carried = std::mem::take(&mut self.carried);
        let mut pool: Vec<usize> = if carried.is_empty() {
            (0..self.n).collect()
        } else {
            let mut taken = vec![false; self.n];
            carried.iter().for_each(|&i| taken[i] = true);
            (0..self.n).filter(|&i| !taken[i]).collect()
        };
        let want = self.batch - carried.len();
        let picks = sample(&mut self.rng, pool.len(), want.min(pool.len()));
        let mut fresh: Vec<usize> = picks.iter().map(|i| pool[i]).collect();
        pool.clear();
        fresh.shuffle(&mut self.rng);
        let rest = fresh.split_off(self.overlap.min(fresh.len()));
        let mut next_overlap = fresh;
        next_overlap.sort_unstable();
        self.carried = next_overlap.clone();
        BatchPlan {
            carried,
            next_overlap,
            rest,
        }
    }
}

/// Step-length rule of the multi-batch driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Wolfe backtracking on the current batch loss.
    Wolfe(WolfeParams),
    /// `w ← w + αp` with no search.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiBatchConfig {
    pub batch: usize,
    pub overlap_frac: f64,
    pub memory: usize,
    pub eps_curv: f64,
    pub iters: usize,
    pub step: StepRule,
    pub seed: u64,
}

impl Default for MultiBatchConfig {
    fn default() -> Self {
        Self {
            batch: 256,
            overlap_frac: 0.5,
            memory: DEFAULT_MEMORY,
            eps_curv: DEFAULT_EPS_CURV,
            iters: 200,
            step: StepRule::Wolfe(WolfeParams::default()),
            seed: 0,
        }
    }
}

/// Multi-batch L-BFGS for `cfg.iters` iterations; see
/// [`multibatch_lbfgs_observed`].
pub fn multibatch_lbfgs<O: Objective + ?Sized>(
    oracle: &O,
    w0: &[f64],
    cfg: &MultiBatchConfig,
) -> Result<RunOutcome> {
    multibatch_lbfgs_observed(oracle, w0, cfg, |_, _| {})
}

/// Multi-batch L-BFGS, calling `observe(w_k, memory)` before each step.
///
/// Iteration `k` evaluates the carried overlap `O_{k−1}` and the fresh
/// part of `J_k` at `w_k`. The overlap gradient at `w_k` closes the pair
/// `(w_k − w_{k−1}, ∇L^{O_{k−1}}(w_k) − ∇L^{O_{k−1}}(w_{k−1}))`; the
/// size-weighted batch gradient drives the step. Records report the batch
/// loss and gradient at `w_k`; the outcome's `loss` is the full objective.
pub fn multibatch_lbfgs_observed<O: Objective + ?Sized>(
    oracle: &O,
    w0: &[f64],
    cfg: &MultiBatchConfig,
    mut observe: impl FnMut(&[f64], &CurvatureMemory),
) -> Result<RunOutcome> {
    if cfg.memory == 0 {
        return Err(Error::Config("memory size must be positive".into()));
    }
    match cfg.step {
        StepRule::Wolfe(p) => p.validate()?,
        StepRule::Fixed(a) if !(a >= 0.0) => {
            return Err(Error::Config(format!("step size {a} must be non-negative")))
        }
        StepRule::Fixed(_) => {}
    }
    let start = Instant::now();
    let mut sampler = OverlapSampler::new(oracle.num_samples(), cfg.batch, cfg.overlap_frac, cfg.seed)?;
    let mut mem = CurvatureMemory::new(oracle.dim(), cfg.memory);
    let mut counters = Counters::default();
    let mut w = w0.to_vec();
    let mut records = Vec::with_capacity(cfg.iters);
    // (∇L^{O_{k−1}}(w_{k−1}), w_{k−1})
    let mut pending: Option<(OverlapGradient, Vec<f64>)> = None;

    for iter in 1..=cfg.iters {
        let plan = sampler.next_plan();
        let mut parts = Vec::new();
        if let Some((prev, w_prev)) = pending.take() {
            let now = OverlapGradient::at(oracle, &w, &plan.carried)?;
            counters.tick();
            let y = prev.difference(&now)?;
            let s: Vec<f64> = w.iter().zip(&w_prev).map(|(a, b)| a - b).collect();
            mem.try_accept_pair(&s, &y, cfg.eps_curv)?;
            parts.push((
                now.indices.len(),
                Evaluation {
                    loss: now.loss,
                    grad: now.grad,
                },
            ));
        }
        let next = OverlapGradient::at(oracle, &w, &plan.next_overlap)?;
        counters.tick();
        parts.push((
            next.indices.len(),
            Evaluation {
                loss: next.loss,
                grad: next.grad.clone(),
            },
        ));
        if !plan.rest.is_empty() {
            parts.push((plan.rest.len(), oracle.eval_batch(&w, &plan.rest)?));
            counters.tick();
        }
        let refs: Vec<(usize, &Evaluation)> = parts.iter().map(|(k, e)| (*k, e)).collect();
        let Evaluation { loss, grad } = weighted_mean(&refs);
        observe(&w, &mem);

        let mut p = two_loop(&mem, &grad)?;
        let alpha = match cfg.step {
            StepRule::Fixed(a) => a,
            StepRule::Wolfe(params) => {
                let scale = if mem.is_empty() { 1.0 / norm(&p).max(1.0) } else { 1.0 };
                p.iter_mut().for_each(|v| *v *= scale);
                if dot(&grad, &p) < 0.0 {
                    let batch = plan.batch();
                    let out = wolfe_search_with(
                        |v| {
                            counters.tick();
                            oracle.eval_batch(v, &batch)
                        },
                        &w,
                        &p,
                        loss,
                        &grad,
                        &params,
                    )?;
                    out.alpha
                } else {
                    0.0
                }
            }
        };
        pending = Some((next, w.clone()));
        axpy(&mut w, alpha, &p);
        records.push(IterationRecord {
            iter,
            loss,
            grad_norm: norm(&grad),
            step_param: alpha,
            rho: None,
            accepted: true,
            fevals: counters.fevals,
            gevals: counters.gevals,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }

    let full = oracle.eval(&w)?;
    let grad_norm = norm(&full.grad);
    Ok(RunOutcome {
        w,
        records,
        loss: full.loss,
        grad_norm,
        converged: false,
        counters,
    })
}

/// Fixed-learning-rate minibatch SGD, `w ← w − lr·∇L^J(w)` with `J` drawn
/// uniformly without replacement each step. Records hold the batch loss
/// and gradient norm before each update.
pub fn sgd_minimize<O: Objective + ?Sized>(
    oracle: &O,
    w0: &[f64],
    lr: f64,
    batch: usize,
    steps: usize,
    seed: u64,
) -> Result<RunOutcome> {
    let n = oracle.num_samples();
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::Config(format!("learning rate {lr} must be non-negative")));
    }
    if batch == 0 || batch > n {
        return Err(Error::Config(format!("batch size {batch} must lie in 1..={n}")));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counters = Counters::default();
    let mut w = w0.to_vec();
    let mut records = Vec::with_capacity(steps);
    for iter in 1..=steps {
        let mut idx = sample(&mut rng, n, batch).into_vec();
        idx.sort_unstable();
        let e = oracle.eval_batch(&w, &idx)?;
        counters.tick();
        if lr > 0.0 {
            axpy(&mut w, -lr, &e.grad);
        }
        records.push(IterationRecord {
            iter,
            loss: e.loss,
            grad_norm: norm(&e.grad),
            step_param: lr,
            rho: None,
            accepted: true,
            fevals: counters.fevals,
            gevals: counters.gevals,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    let full = oracle.eval(&w)?;
    let grad_norm = norm(&full.grad);
    Ok(RunOutcome {
        w,
        records,
        loss: full.loss,
        grad_norm,
        converged: false,
        counters,
    })
}

/// Inputs of the L-BFGS versus SGD per-sample cost model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// L-BFGS batch size.
    pub b: f64,
    /// SGD batch size.
    pub b_s: f64,
    /// SGD update frequency.
    pub f: f64,
    /// Mean gradient recomputations per line search.
    pub z: f64,
    /// L-BFGS memory.
    pub m: f64,
}

/// `f·z / b_s + 4·f·m / (b·b_s)`.
pub fn cost_ratio(p: &CostParams) -> f64 {
    p.f * p.z / p.b_s + 4.0 * p.f * p.m / (p.b * p.b_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sub, DenseMatrix};
    use crate::problems::{Mlp, MlpSpec, Quadratic, synthetic_digits};

    fn quad() -> Quadratic {
        Quadratic::with_spectrum(6, 1.0, 5.0, 3).with_samples(40, 0.3, 4)
    }

    #[test]
    fn zero_displacement_gives_zero_y() {
        let q = quad();
        let w = vec![0.1; 6];
        let prev = OverlapGradient::at(&q, &w, &[1, 2, 3]).unwrap();
        assert_eq!(overlap_y(&q, &w, &prev, &[1, 2, 3]).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn quadratic_y_is_hessian_times_s() {
        let q = quad();
        let w = vec![0.1, -0.2, 0.3, 0.0, 0.5, -1.0];
        let s = vec![0.5, 0.1, -0.3, 0.2, 0.0, 0.7];
        let w_next: Vec<f64> = w.iter().zip(&s).map(|(a, b)| a + b).collect();
        let prev = OverlapGradient::at(&q, &w, &[7, 30]).unwrap();
        let y = overlap_y(&q, &w_next, &prev, &[7, 30]).unwrap();
        assert!(norm(&sub(&y, &q.hessian().matvec(&s))) < 1e-12);
    }

    #[test]
    fn mismatched_overlap_is_stale() {
        let q = quad();
        let prev = OverlapGradient::at(&q, &[0.0; 6], &[1, 2]).unwrap();
        assert!(matches!(overlap_y(&q, &[0.0; 6], &prev, &[1, 3]), Err(Error::StaleOverlap)));
    }

    #[test]
    fn singleton_overlap_on_mlp() {
        let spec = MlpSpec::new(&[784, 8, 10]).unwrap();
        let mlp = Mlp::new(spec.clone(), synthetic_digits(20, 1)).unwrap();
        let w = spec.init_params(1);
        let w_next = spec.init_params(2);
        let prev = OverlapGradient::at(&mlp, &w, &[5]).unwrap();
        let y = overlap_y(&mlp, &w_next, &prev, &[5]).unwrap();
        let direct = sub(&mlp.eval_batch(&w_next, &[5]).unwrap().grad, &mlp.eval_batch(&w, &[5]).unwrap().grad);
        assert!(y.iter().zip(&direct).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn combined_gradient_values() {
        assert_eq!(combined_gradient(&[1.0, 2.0], &[1.0, 2.0]), vec![1.0, 2.0]);
        assert_eq!(combined_gradient(&[1.0, 0.0], &[0.0, 1.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn combined_gradient_equals_union_batch() {
        let q = quad();
        let w = vec![0.4; 6];
        let a = q.eval_batch(&w, &[0, 3, 9]).unwrap().grad;
        let b = q.eval_batch(&w, &[11, 20, 21]).unwrap().grad;
        let union = q.eval_batch(&w, &[0, 3, 9, 11, 20, 21]).unwrap().grad;
        assert!(norm(&sub(&combined_gradient(&a, &b), &union)) < 1e-12);
    }

    #[test]
    fn sampler_carries_overlap() {
        let mut s = OverlapSampler::new(50, 10, 0.3, 7).unwrap();
        let first = s.next_plan();
        assert!(first.carried.is_empty());
        assert_eq!(first.batch().len(), 10);
        let mut prev = first;
        for _ in 0..20 {
            let plan = s.next_plan();
            assert_eq!(plan.carried, prev.next_overlap);
            assert_eq!(plan.next_overlap.len(), 3);
            let mut b = plan.batch();
            assert_eq!(b.len(), 10);
            b.sort_unstable();
            b.dedup();
            assert_eq!(b.len(), 10);
            prev = plan;
        }
        assert!(OverlapSampler::new(50, 10, 0.6, 0).is_err());
        assert!(OverlapSampler::new(5, 10, 0.5, 0).is_err());
    }

    #[test]
    fn full_batch_half_overlap_uses_full_gradient() {
        let mut s = OverlapSampler::new(8, 8, 0.5, 1).unwrap();
        s.next_plan();
        let plan = s.next_plan();
        assert_eq!(plan.carried.len(), 4);
        assert!(plan.rest.is_empty());
        let mut b = plan.batch();
        b.sort_unstable();
        assert_eq!(b, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn multibatch_converges_on_full_batch_quadratic() {
        let q = Quadratic::with_spectrum(6, 1.0, 5.0, 3).with_samples(20, 0.0, 4);
        let cfg = MultiBatchConfig {
            batch: 20,
            iters: 60,
            ..MultiBatchConfig::default()
        };
        let out = multibatch_lbfgs(&q, &[0.0; 6], &cfg).unwrap();
        assert!(out.grad_norm < 1e-8, "{}", out.grad_norm);
    }

    #[test]
    fn multibatch_is_deterministic() {
        let q = quad();
        let cfg = MultiBatchConfig {
            batch: 10,
            iters: 30,
            ..MultiBatchConfig::default()
        };
        let a = multibatch_lbfgs(&q, &[0.0; 6], &cfg).unwrap();
        let b = multibatch_lbfgs(&q, &[0.0; 6], &cfg).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(a.counters, b.counters);
    }

    #[test]
    fn sgd_monotone_on_quadratic() {
        let q = Quadratic::new(DenseMatrix::from_diag(&[1.0, 4.0, 10.0]), vec![1.0, 1.0, 1.0]).unwrap();
        let out = sgd_minimize(&q, &[3.0, -2.0, 1.0], 0.19, 1, 50, 0).unwrap();
        for pair in out.records.windows(2) {
            assert!(pair[1].loss < pair[0].loss);
        }
    }

    #[test]
    fn sgd_zero_rate_is_identity() {
        let q = quad();
        let out = sgd_minimize(&q, &[0.5; 6], 0.0, 5, 10, 3).unwrap();
        assert_eq!(out.w, vec![0.5; 6]);
    }

    #[test]
    fn sgd_is_deterministic() {
        let spec = MlpSpec::new(&[784, 8, 10]).unwrap();
        let mlp = Mlp::new(spec.clone(), synthetic_digits(64, 2)).unwrap();
        let w0 = spec.init_params(0);
        let mut a = sgd_minimize(&mlp, &w0, 0.1, 8, 5, 9).unwrap();
        let mut b = sgd_minimize(&mlp, &w0, 0.1, 8, 5, 9).unwrap();
        for r in a.records.iter_mut().chain(b.records.iter_mut()) {
            r.wall_ms = 0.0;
        }
        assert_eq!(a.records, b.records);
        assert_eq!(a.w, b.w);
    }

    #[test]
    fn cost_ratio_values() {
        let base = CostParams {
            b: 2048.0,
            b_s: 32.0,
            f: 4.0,
            z: 5.0,
            m: 20.0,
        };
        assert!((cost_ratio(&base) - 0.6298828125).abs() < 1e-15);
        let degenerate = CostParams { m: 0.0, z: 0.0, ..base };
        assert_eq!(cost_ratio(&degenerate), 0.0);
        let first = base.f * base.z / base.b_s;
        let half_b = CostParams { b: 1024.0, ..base };
        assert!(((cost_ratio(&half_b) - first) - 2.0 * (cost_ratio(&base) - first)).abs() < 1e-15);
    }
}
