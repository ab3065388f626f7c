//! Backtracking Wolfe line search and the line-search L-BFGS driver.

use std::time::Instant;

use crate::direction::two_loop;
use crate::linalg::{dot, norm, sub};
use crate::memory::{CurvatureMemory, DEFAULT_EPS_CURV, DEFAULT_MEMORY};
use crate::problems::{Evaluation, Objective};
use crate::record::{Counters, IterationRecord, RunOutcome};
use crate::{Error, Result};

/// Parameters of the backtracking search over `α ∈ [alpha_min, alpha_init]`.
///
/// Trials are `alpha_init · backtrack^j`, clamped below at `alpha_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub alpha_init: f64,
    pub alpha_min: f64,
    pub backtrack: f64,
    pub max_trials: usize,
}

impl Default for WolfeParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            alpha_init: 1.0,
            alpha_min: 0.1,
            backtrack: 0.5,
            max_trials: 20,
        }
    }
}

impl WolfeParams {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.c1
            && self.c1 < self.c2
            && self.c2 < 1.0
            && 0.0 < self.alpha_min
            && self.alpha_min <= self.alpha_init
            && 0.0 < self.backtrack
            && self.backtrack < 1.0
            && self.max_trials > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Wolfe parameters {self:?}")))
        }
    }
}

/// Result of [`wolfe_search`]: the last trial and whether it passed both
/// conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct WolfeOutcome {
    pub alpha: f64,
    pub satisfied: bool,
    pub f_new: f64,
    pub g_new: Vec<f64>,
    pub trials: usize,
}

/// Sufficient decrease `f(α) ≤ f₀ + c₁ α g₀ᵀp`.
pub fn sufficient_decrease(f0: f64, slope0: f64, alpha: f64, f_new: f64, c1: f64) -> bool {
    f_new <= f0 + c1 * alpha * slope0
}

/// Curvature `∇f(α)ᵀp ≥ c₂ g₀ᵀp`.
pub fn curvature_condition(slope0: f64, slope_new: f64, c2: f64) -> bool {
    slope_new >= c2 * slope0
}

/// Backtracks from `alpha_init` while sufficient decrease fails.
///
/// Stops at the first trial with sufficient decrease, reporting
/// `satisfied` iff the curvature condition holds there too (shrinking
/// further cannot repair curvature), or at the floor `alpha_min`, whose
/// trial values are returned with `satisfied = false`.
pub fn wolfe_search<O: Objective + ?Sized>(
    oracle: &O,
    w: &[f64],
    p: &[f64],
    f0: f64,
    g0: &[f64],
    params: &WolfeParams,
) -> Result<WolfeOutcome> {
    wolfe_search_with(|v| oracle.eval(v), w, p, f0, g0, params)
}

/// [`wolfe_search`] over an arbitrary evaluation function, e.g. a sub-batch.
pub fn wolfe_search_with(
    mut eval: impl FnMut(&[f64]) -> Result<Evaluation>,
    w: &[f64],
    p: &[f64],
    f0: f64,
    g0: &[f64],
    params: &WolfeParams,
) -> Result<WolfeOutcome> {
    let slope0 = dot(g0, p);
    if !(slope0 < 0.0) {
        return Err(Error::NotDescent { slope: slope0 });
    }
    let mut alpha = params.alpha_init;
    let mut trial = w.to_vec();
    for trials in 1..=params.max_trials {
        for ((t, wi), pi) in trial.iter_mut().zip(w).zip(p) {
            *t = wi + alpha * pi;
        }
        let e = eval(&trial)?;
        let decrease = e.loss.is_finite() && sufficient_decrease(f0, slope0, alpha, e.loss, params.c1);
        let satisfied = decrease && curvature_condition(slope0, dot(&e.grad, p), params.c2);
        if decrease || alpha <= params.alpha_min || trials == params.max_trials {
            return Ok(WolfeOutcome {
                alpha,
                satisfied,
                f_new: e.loss,
                g_new: e.grad,
                trials,
            });
        }
        alpha = (alpha * params.backtrack).max(params.alpha_min);
    }
    unreachable!("max_trials > 0")
}

/// Stopping rule and memory size for the quasi-Newton drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverConfig {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub memory: usize,
    pub eps_curv: f64,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-5,
            max_iters: 200,
            memory: DEFAULT_MEMORY,
            eps_curv: DEFAULT_EPS_CURV,
        }
    }
}

impl DriverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || self.memory == 0 || !(self.eps_curv >= 0.0) {
            return Err(Error::Config(format!("invalid driver configuration {self:?}")));
        }
        Ok(())
    }
}

/// Halving steps tried on the steepest-descent restart before giving up.
const RESTART_TRIALS: usize = 60;

/// Line-search L-BFGS from `w0`.
///
/// Each iteration takes `p = −H g` from the two-loop recursion and a Wolfe
/// step; the pair `(αp, Δg)` is offered to the memory. When the search
/// reaches its floor without any decrease, the memory is cleared and the
/// iteration falls back to an Armijo-backtracked steepest-descent step.
/// The first direction of an empty memory is scaled to at most unit length.
pub fn ls_minimize<O: Objective + ?Sized>(
    oracle: &O,
    w0: &[f64],
    cfg: &DriverConfig,
    wolfe: &WolfeParams,
) -> Result<RunOutcome> {
    cfg.validate()?;
    wolfe.validate()?;
    let start = Instant::now();
    let n = oracle.dim();
    let mut counters = Counters::default();
    let mut w = w0.to_vec();
    let Evaluation { loss: mut f, grad: mut g } = oracle.eval(&w)?;
    counters.tick();
    let mut mem = CurvatureMemory::new(n, cfg.memory);
    let mut records = Vec::new();

    for iter in 1..=cfg.max_iters {
        if norm(&g) < cfg.grad_tol {
            break;
        }
        let mut p = two_loop(&mem, &g)?;
        if mem.is_empty() {
            scale_to_unit(&mut p);
        }
        debug_assert!(dot(&g, &p) < 0.0, "quasi-Newton direction must descend");

        let mut out = wolfe_search_with(
            |v| {
                counters.tick();
                oracle.eval(v)
            },
            &w,
            &p,
            f,
            &g,
            wolfe,
        )?;
        if !out.satisfied && !(out.f_new < f) {
            mem.clear();
            p = g.iter().map(|v| -v).collect();
            scale_to_unit(&mut p);
            match armijo_restart(oracle, &w, &p, f, &g, wolfe.c1, &mut counters)? {
                Some(o) => out = o,
                None => break,
            }
        }

        let s: Vec<f64> = p.iter().map(|v| out.alpha * v).collect();
        let y = sub(&out.g_new, &g);
        for (wi, si) in w.iter_mut().zip(&s) {
            *wi += si;
        }
        mem.try_accept_pair(&s, &y, cfg.eps_curv)?;
        f = out.f_new;
        g = out.g_new;
        records.push(IterationRecord {
            iter,
            loss: f,
            grad_norm: norm(&g),
            step_param: out.alpha,
            rho: None,
            accepted: true,
            fevals: counters.fevals,
            gevals: counters.gevals,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }

    let grad_norm = norm(&g);
    Ok(RunOutcome {
        w,
        records,
        loss: f,
        grad_norm,
        converged: grad_norm < cfg.grad_tol,
        counters,
    })
}

fn scale_to_unit(p: &mut [f64]) {
    let scale = 1.0 / norm(p).max(1.0);
    p.iter_mut().for_each(|v| *v *= scale);
}

/// Halves `α` from 1 until sufficient decrease holds; `None` if it never does.
fn armijo_restart<O: Objective + ?Sized>(
    oracle: &O,
    w: &[f64],
    p: &[f64],
    f0: f64,
    g0: &[f64],
    c1: f64,
    counters: &mut Counters,
) -> Result<Option<WolfeOutcome>> {
    let slope0 = dot(g0, p);
    let mut alpha = 1.0;
    for trials in 1..=RESTART_TRIALS {
        let trial: Vec<f64> = w.iter().zip(p).map(|(wi, pi)| wi + alpha * pi).collect();
        let e = oracle.eval(&trial)?;
        counters.tick();
        if e.loss.is_finite() && sufficient_decrease(f0, slope0, alpha, e.loss, c1) {
            return Ok(Some(WolfeOutcome {
                alpha,
                satisfied: false,
                f_new: e.loss,
                g_new: e.grad,
                trials,
            }));
        }
        alpha *= 0.5;
    }
    Ok(None)
}
