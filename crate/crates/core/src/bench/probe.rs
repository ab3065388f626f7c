use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{norm, sym_eig};
use crate::memory::DEFAULT_MEMORY;
use crate::multibatch::{multibatch_lbfgs_observed, MultiBatchConfig, StepRule};
use crate::problems::{Objective, Quadratic};
use crate::{Error, Result};

/// Fixed-step multi-batch L-BFGS on a diagonal quadratic with spectrum
/// `[lambda, big_lambda]` and per-sample noise in the linear term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ProbeConfig {
    pub lambda: f64,
    pub big_lambda: f64,
    pub dim: usize,
    pub alpha: f64,
    pub iters: usize,
    /// Batch size; absent means every sample, i.e. exact gradients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    pub samples: usize,
    pub noise: f64,
    pub memory: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            big_lambda: 10.0,
            dim: 10,
            alpha: 0.1,
            iters: 300,
            batch: None,
            samples: 256,
            noise: 1.0,
            memory: DEFAULT_MEMORY,
            seed: 0,
        }
    }
}

/// Measured offsets `L(w_k) − L(w*)` against the bound
/// `C·c^k + (1 − c^k)·α²Λ′²Λη²/(4λ′λ)` with `c = 1 − 2αλλ′`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// `offsets[k]` at `w_k`, `k = 0..=iters`.
    pub offsets: Vec<f64>,
    pub bound: Vec<f64>,
    /// Extreme eigenvalues of the inverse Hessian approximations used.
    pub lambda_prime: f64,
    pub big_lambda_prime: f64,
    /// `E‖∇L^J(w*)‖²` over sampled batches.
    pub eta_sq: f64,
    pub contraction: f64,
    pub residual_term: f64,
    /// Per-iteration factor of a least-squares fit to `log offset` over the
    /// iterations with offset above `max(1e-13, 10·plateau)`.
    pub fitted_rate: f64,
    /// Mean offset over the last quarter of the run.
    pub plateau: f64,
    pub bound_holds: bool,
}

impl ProbeReport {
    pub fn final_offset(&self) -> f64 {
        *self.offsets.last().expect("offsets include w₀")
    }
}

/// Offsets below this are indistinguishable from rounding in `L`.
const OFFSET_FLOOR: f64 = 1e-13;

fn diagonal_problem(cfg: &ProbeConfig) -> Result<Quadratic> {
    let n = cfg.dim;
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            cfg.lambda + t * (cfg.big_lambda - cfg.lambda)
        })
        .collect();
    let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
    Ok(Quadratic::diagonal(&diag, b)?.with_samples(cfg.samples, cfg.noise, cfg.seed))
}

/// Runs the probe; fails with [`Error::StepTooLarge`] when `α ≥ 1/(2λλ′)`
/// for the measured `λ′`.
pub fn probe_bound(cfg: &ProbeConfig) -> Result<ProbeReport> {
    if !(cfg.lambda > 0.0 && cfg.big_lambda >= cfg.lambda) || cfg.dim == 0 || cfg.samples < 2 {
        return Err(Error::Config(format!("invalid probe configuration {cfg:?}")));
    }
    if !(cfg.alpha >= 0.0) {
        return Err(Error::Config(format!("step size {} must be non-negative", cfg.alpha)));
    }
    let quad = diagonal_problem(cfg)?;
    let w_star = quad.minimizer()?;
    let l_star = quad.eval(&w_star)?.loss;
    let batch = cfg.batch.unwrap_or(cfg.samples);

    let mut offsets = Vec::with_capacity(cfg.iters + 1);
    let (mut lam_lo, mut lam_hi) = (f64::INFINITY, 0.0f64);
    let mut failure = None;
    let result = multibatch_lbfgs_observed(
        &quad,
        &vec![0.0; cfg.dim],
        &MultiBatchConfig {
            batch,
            overlap_frac: 0.5,
            memory: cfg.memory,
            iters: cfg.iters,
            step: StepRule::Fixed(cfg.alpha),
            seed: cfg.seed,
            ..MultiBatchConfig::default()
        },
        |w, mem| {
            match quad.eval(w) {
                Ok(e) => offsets.push(e.loss - l_star),
                Err(e) => failure = Some(e),
            }
            match mem.hessian_inverse_dense().and_then(|h| Ok(sym_eig(&h)?)) {
                Ok(eig) => {
                    lam_lo = lam_lo.min(eig.eigvals[0]);
                    lam_hi = lam_hi.max(*eig.eigvals.last().unwrap());
                }
                Err(e) => failure = Some(e),
            }
        },
    );
    if lam_lo.is_infinite() {
        (lam_lo, lam_hi) = (1.0, 1.0);
    }
    // An inadmissible step usually diverges, so it is reported ahead of
    // whatever numerical failure the divergence caused.
    let admissible = 1.0 / (2.0 * cfg.lambda * lam_lo);
    if cfg.alpha >= admissible {
        return Err(Error::StepTooLarge {
            alpha: cfg.alpha,
            bound: admissible,
        });
    }
    let out = result?;
    if let Some(e) = failure {
        return Err(e);
    }
    offsets.push(out.loss - l_star);

    let eta_sq = measure_eta_sq(&quad, &w_star, batch, cfg.seed)?;
    let contraction = 1.0 - 2.0 * cfg.alpha * cfg.lambda * lam_lo;
    let residual_term =
        cfg.alpha * cfg.alpha * lam_hi * lam_hi * cfg.big_lambda * eta_sq / (4.0 * lam_lo * cfg.lambda);
    let c0 = offsets[0];
    let bound: Vec<f64> = (0..offsets.len())
        .map(|k| {
            let ck = contraction.powi(k as i32);
            c0 * ck + (1.0 - ck) * residual_term
        })
        .collect();
    let bound_holds = offsets
        .iter()
        .zip(&bound)
        .all(|(o, b)| *o <= b * (1.0 + 1e-9) + OFFSET_FLOOR);
    let tail = &offsets[offsets.len() - offsets.len().div_ceil(4)..];
    let plateau = tail.iter().sum::<f64>() / tail.len() as f64;
    let fitted_rate = log_linear_rate(&offsets, OFFSET_FLOOR.max(10.0 * plateau));

    Ok(ProbeReport {
        offsets,
        bound,
        lambda_prime: lam_lo,
        big_lambda_prime: lam_hi,
        eta_sq,
        contraction,
        residual_term,
        fitted_rate,
        plateau,
        bound_holds,
    })
}

/// Mean of `‖∇L^J(w*)‖²` over 200 batches drawn like the sampler's.
fn measure_eta_sq(quad: &Quadratic, w_star: &[f64], batch: usize, seed: u64) -> Result<f64> {
    const DRAWS: usize = 200;
    let n = quad.num_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut total = 0.0;
    for _ in 0..DRAWS {
        let mut idx = sample(&mut rng, n, batch).into_vec();
        idx.sort_unstable();
        total += norm(&quad.eval_batch(w_star, &idx)?.grad).powi(2);
    }
    Ok(total / DRAWS as f64)
}

/// `exp(slope)` of the least-squares line through `(k, ln offset_k)` over
/// the leading run of offsets above `floor`; 1 when fewer than two qualify.
fn log_linear_rate(offsets: &[f64], floor: f64) -> f64 {
    let pts: Vec<(f64, f64)> = offsets
        .iter()
        .enumerate()
        .take_while(|(_, &o)| o > floor)
        .map(|(k, &o)| (k as f64, o.ln()))
        .collect();
    if pts.len() < 2 {
        return 1.0;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    (sxy / sxx).exp()
}
