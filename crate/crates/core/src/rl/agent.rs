use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::direction::two_loop;
use crate::linalg::{axpy, dot, norm, sub};
use crate::linesearch::{wolfe_search_with, WolfeParams};
use crate::memory::{CurvatureMemory, DEFAULT_EPS_CURV, DEFAULT_MEMORY};
use crate::problems::Evaluation;
use crate::record::{Counters, IterationRecord};
use crate::{Error, Result};

use super::gridworld::{Action, Gridworld};
use super::qfunction::{argmax, bellman_risk_grad, value_gap, QFunction};

/// One transition `(s, a, r, s′)`; `terminal` marks an absorbing `s′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub terminal: bool,
}

/// Experience buffer of fixed capacity, drained by each optimization step.
#[derive(Debug, Clone)]
pub struct ExperienceMemory {
    buffer: Vec<Experience>,
    capacity: usize,
}

impl ExperienceMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            buffer: Vec::with_capacity(capacity),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buffer.len() >= self.capacity
    }

    /// Stores `e`; a full memory rejects it and returns `false`.
    pub fn push(&mut self, e: Experience) -> bool {
        if self.is_full() {
            return false;
        }
        self.buffer.push(e);
        true
    }

    pub fn as_slice(&self) -> &[Experience] {
        &self.buffer
    }

    /// Empties the memory, returning its contents.
    pub fn drain(&mut self) -> Vec<Experience> {
        std::mem::take(&mut self.buffer)
    }
}

/// With probability `1 − ε` the greedy action (ties to the lowest index),
/// otherwise a uniform action.
pub fn eps_greedy(q_row: &[f64], epsilon: f64, rng: &mut impl Rng) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..q_row.len())
    } else {
        argmax(q_row)
    }
}

/// Linear from 1 at step 0 to 0.1 at `total_anneal`, then constant.
pub fn epsilon_schedule(step: usize, total_anneal: usize) -> f64 {
    let frac = if total_anneal == 0 {
        1.0
    } else {
        (step as f64 / total_anneal as f64).min(1.0)
    };
    1.0 - 0.9 * frac
}

/// Exploration rate during training, indexed by environment steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exploration {
    /// [`epsilon_schedule`] over this many steps.
    Annealed(usize),
    Constant(f64),
}

impl Exploration {
    pub fn epsilon(&self, step: usize) -> f64 {
        match *self {
            Exploration::Annealed(total) => epsilon_schedule(step, total),
            Exploration::Constant(e) => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QConfig {
    /// Experience memory capacity `b`.
    pub batch: usize,
    pub memory: usize,
    pub episodes: usize,
    pub max_episode_len: usize,
    pub exploration: Exploration,
    pub hidden: usize,
    pub wolfe: WolfeParams,
    pub eps_curv: f64,
    /// Optimization steps whose gradient norm is below this are skipped.
    pub grad_tol: f64,
    /// Evaluate every this many optimization steps; 0 only at the end.
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub eval_epsilon: f64,
    pub seed: u64,
}

impl Default for QConfig {
    fn default() -> Self {
        Self {
            batch: 128,
            memory: DEFAULT_MEMORY,
            episodes: 6000,
            max_episode_len: 50,
            exploration: Exploration::Annealed(60_000),
            hidden: 32,
            wolfe: WolfeParams::default(),
            eps_curv: DEFAULT_EPS_CURV,
            grad_tol: 1e-10,
            eval_every: 20,
            eval_episodes: 20,
            eval_epsilon: 0.05,
            seed: 0,
        }
    }
}

impl QConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch == 0 {
            return bad("batch size must be positive");
        }
        if self.memory == 0 {
            return bad("memory size must be positive");
        }
        if self.hidden == 0 || self.max_episode_len == 0 {
            return bad("hidden width and episode length must be positive");
        }
        let eps_ok = |e: f64| (0.0..=1.0).contains(&e);
        if let Exploration::Constant(e) = self.exploration {
            if !eps_ok(e) {
                return bad("exploration rate must lie in [0, 1]");
            }
        }
        if !eps_ok(self.eval_epsilon) {
            return bad("evaluation exploration rate must lie in [0, 1]");
        }
        self.wolfe.validate()
    }
}

/// Frozen-policy evaluation after `step` optimization steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    /// Mean undiscounted episode return.
    pub score: f64,
    pub value_gap: f64,
}

#[derive(Debug, Clone)]
pub struct QRun {
    pub q: QFunction,
    pub records: Vec<IterationRecord>,
    pub evals: Vec<EvalPoint>,
    pub counters: Counters,
    pub env_steps: usize,
}

impl QRun {
    pub fn final_eval(&self) -> &EvalPoint {
        self.evals.last().expect("training always ends with an evaluation")
    }

    pub fn best_score(&self) -> f64 {
        self.evals.iter().map(|e| e.score).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Gradients carried between optimization steps.
struct Carry {
    /// `∇L^{O_{k−1}}(w_k)` under the targets of step `k − 1`.
    prev_overlap_grad: Option<Vec<f64>>,
}

/// Deep Q-learning with one multi-batch line-search L-BFGS step per `b`
/// collected transitions.
///
/// Step `k` takes `O_k = D`, freezes targets from the snapshot `w_{k−1}`,
/// forms `g^{J_k} = ½(g^{O_k} + g^{O_{k−1}})`, and searches along
/// `p = −H g^{J_k}` on `L^{O_k}` with `α ∈ [α_min, 1]`. If `p` does not
/// descend on `L^{O_k}` it is recomputed from `g^{O_k}` alone. The pair
/// uses `y = ∇L^{O_k}(w_{k+1}) − ∇L^{O_k}(w_k)`, and the snapshot moves to
/// `w_k`. Episodes start on a uniformly drawn floor cell.
pub fn train_qlearning(env: &Gridworld, cfg: &QConfig) -> Result<QRun> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let oracle = env.value_iteration(1e-12);
    let states = env.states();
    let mut q = QFunction::new(env.num_cells(), cfg.hidden, cfg.seed)?;
    let mut mem = CurvatureMemory::new(q.params().len(), cfg.memory);
    let mut replay = ExperienceMemory::new(cfg.batch);
    let mut carry = Carry {
        prev_overlap_grad: None,
    };
    let mut counters = Counters::default();
    let mut records = Vec::new();
    let mut evals = Vec::new();
    let mut env_steps = 0;

    for _ in 0..cfg.episodes {
        let mut s = states[rng.random_range(0..states.len())];
        for _ in 0..cfg.max_episode_len {
            let a = eps_greedy(&q.values(s), cfg.exploration.epsilon(env_steps), &mut rng);
            let st = env.step(s, Action::from_index(a));
            env_steps += 1;
            replay.push(Experience {
                s,
                a,
                r: st.reward,
                s_next: st.next,
                terminal: st.terminal,
            });
            if replay.is_full() {
                let batch = replay.drain();
                let iter = records.len() + 1;
                let record = optimization_step(&mut q, &mut mem, &mut carry, &batch, env.discount(), cfg, &mut counters, iter)?;
                records.push(IterationRecord {
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                    ..record
                });
                if cfg.eval_every > 0 && iter % cfg.eval_every == 0 {
                    evals.push(evaluate(env, &q, &oracle, &states, cfg, iter, &mut eval_rng));
                }
            }
            if st.terminal {
                break;
            }
            s = st.next;
        }
    }
    if evals.last().map(|e| e.step) != Some(records.len()) {
        evals.push(evaluate(env, &q, &oracle, &states, cfg, records.len(), &mut eval_rng));
    }
    Ok(QRun {
        q,
        records,
        evals,
        counters,
        env_steps,
    })
}

#[allow(clippy::too_many_arguments)]
fn optimization_step(
    q: &mut QFunction,
    mem: &mut CurvatureMemory,
    carry: &mut Carry,
    batch: &[crate::rl::Experience],
    discount: f64,
    cfg: &QConfig,
    counters: &mut Counters,
    iter: usize,
) -> Result<IterationRecord> {
    let targets = q.td_targets(batch, discount);
    let net = q.network().clone();
    let w = q.params().to_vec();
    let mut eval = |v: &[f64]| -> Result<Evaluation> {
        counters.tick();
        bellman_risk_grad(&net, batch, v, &targets)
    };
    let Evaluation { loss, grad: g_o } = eval(&w)?;
    let g_j = match carry.prev_overlap_grad.take() {
        Some(prev) => prev.iter().zip(&g_o).map(|(a, b)| 0.5 * (a + b)).collect(),
        None => g_o.clone(),
    };
    let grad_norm = norm(&g_j);
    if !(grad_norm >= cfg.grad_tol) || norm(&g_o) == 0.0 {
        carry.prev_overlap_grad = Some(g_o);
        q.advance(w);
        return Ok(record(iter, loss, grad_norm, 0.0, false, counters));
    }

    let mut p = two_loop(mem, &g_j)?;
    if !(dot(&g_o, &p) < 0.0) {
        p = two_loop(mem, &g_o)?;
    }
    if mem.is_empty() {
        let scale = 1.0 / norm(&p).max(1.0);
        p.iter_mut().for_each(|v| *v *= scale);
    }
    let out = wolfe_search_with(&mut eval, &w, &p, loss, &g_o, &cfg.wolfe)?;
    let mut w_next = w.clone();
    axpy(&mut w_next, out.alpha, &p);
    let s: Vec<f64> = p.iter().map(|v| out.alpha * v).collect();
    let y = sub(&out.g_new, &g_o);
    mem.try_accept_pair(&s, &y, cfg.eps_curv)?;
    carry.prev_overlap_grad = Some(out.g_new);
    q.advance(w_next);
    Ok(record(iter, loss, grad_norm, out.alpha, true, counters))
}

fn record(iter: usize, loss: f64, grad_norm: f64, alpha: f64, accepted: bool, counters: &Counters) -> IterationRecord {
    IterationRecord {
        iter,
        loss,
        grad_norm,
        step_param: alpha,
        rho: None,
        accepted,
        fevals: counters.fevals,
        gevals: counters.gevals,
        wall_ms: 0.0,
    }
}

fn evaluate(
    env: &Gridworld,
    q: &QFunction,
    oracle: &super::QTable,
    states: &[usize],
    cfg: &QConfig,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> EvalPoint {
    let mut total = 0.0;
    for _ in 0..cfg.eval_episodes {
        let mut s = states[rng.random_range(0..states.len())];
        for _ in 0..cfg.max_episode_len {
            let a = eps_greedy(&q.values(s), cfg.eval_epsilon, rng);
            let st = env.step(s, Action::from_index(a));
            total += st.reward;
            if st.terminal {
                break;
            }
            s = st.next;
        }
    }
    EvalPoint {
        step,
        score: total / cfg.eval_episodes.max(1) as f64,
        value_gap: value_gap(q, oracle, states),
    }
}

/// Floor cells whose greedy action is optimal for `oracle` within `tol`.
pub fn policy_matches(env: &Gridworld, q: &QFunction, oracle: &super::QTable, tol: f64) -> usize {
    env.states()
        .into_iter()
        .filter(|&s| super::optimal_actions(&oracle[s], tol).contains(&q.greedy(s)))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_respects_capacity_and_drains() {
        let mut m = ExperienceMemory::new(2);
        let e = Experience {
            s: 0,
            a: 0,
            r: 0.0,
            s_next: 0,
            terminal: false,
        };
        assert!(m.push(e) && m.push(e));
        assert!(!m.push(e));
        assert_eq!(m.len(), 2);
        assert_eq!(m.drain().len(), 2);
        assert!(m.is_empty());
    }

    #[test]
    fn greedy_ties_go_to_lowest_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(eps_greedy(&[1.0, 1.0], 0.0, &mut rng), 0);
        assert_eq!(eps_greedy(&[0.0, 2.0, 1.0, 2.0], 0.0, &mut rng), 1);
    }

    #[test]
    fn uniform_exploration_within_three_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[eps_greedy(&[0.0, 5.0, 1.0, 2.0], 1.0, &mut rng)] += 1;
        }
        let p = 0.25;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(epsilon_schedule(0, 100), 1.0);
        assert!((epsilon_schedule(100, 100) - 0.1).abs() < 1e-15);
        assert!((epsilon_schedule(50, 100) - 0.55).abs() < 1e-15);
        assert!((epsilon_schedule(500, 100) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn optimal_start_is_a_fixed_point() {
        let env = Gridworld::default();
        let oracle = env.value_iteration(1e-13);
        let states = env.states();
        let q0 = QFunction::from_table(&oracle, 32).unwrap();
        let mut q = q0.clone();
        let mut mem = CurvatureMemory::new(q.params().len(), 20);
        let mut carry = Carry {
            prev_overlap_grad: None,
        };
        let cfg = QConfig::default();
        let mut counters = Counters::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for iter in 1..=10 {
            let batch: Vec<Experience> = (0..cfg.batch)
                .map(|_| {
                    let s = states[rng.random_range(0..states.len())];
                    let a = eps_greedy(&q.values(s), 0.0, &mut rng);
                    let st = env.step(s, Action::from_index(a));
                    Experience {
                        s,
                        a,
                        r: st.reward,
                        s_next: st.next,
                        terminal: st.terminal,
                    }
                })
                .collect();
            let before = q.params().to_vec();
            optimization_step(&mut q, &mut mem, &mut carry, &batch, env.discount(), &cfg, &mut counters, iter).unwrap();
            let drift = before.iter().zip(q.params()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(drift <= 1e-6, "step {iter}: drift {drift}");
        }
        assert!(value_gap(&q, &oracle, &states) < 1e-6);
    }

    #[test]
    fn step_sizes_stay_in_bounds_and_memory_drains() {
        let env = Gridworld::default();
        let cfg = QConfig {
            episodes: 150,
            eval_every: 0,
            ..QConfig::default()
        };
        let run = train_qlearning(&env, &cfg).unwrap();
        assert_eq!(run.records.len(), run.env_steps / cfg.batch);
        for r in run.records.iter().filter(|r| r.accepted) {
            assert!((0.1..=1.0).contains(&r.step_param), "{}", r.step_param);
        }
        assert_eq!(run.evals.len(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let env = Gridworld::default();
        let cfg = QConfig {
            episodes: 200,
            eval_every: 5,
            seed: 3,
            ..QConfig::default()
        };
        let a = train_qlearning(&env, &cfg).unwrap();
        let b = train_qlearning(&env, &cfg).unwrap();
        assert_eq!(a.evals, b.evals);
        assert_eq!(a.q.params(), b.q.params());
    }

    #[test]
    fn invalid_config() {
        let env = Gridworld::default();
        for cfg in [
            QConfig {
                batch: 0,
                ..QConfig::default()
            },
            QConfig {
                exploration: Exploration::Constant(1.5),
                ..QConfig::default()
            },
        ] {
            assert!(matches!(train_qlearning(&env, &cfg), Err(Error::Config(_))));
        }
    }
}
