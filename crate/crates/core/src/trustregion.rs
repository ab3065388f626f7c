//! Trust-region L-BFGS: the subproblem
//!
//! ```text
//! min Q(p) = gᵀp + ½ pᵀBp   subject to ‖p‖₂ ≤ δ
//! ```
//!
//! solved in closed form over the compact representation, and the outer
//! radius-controlled driver.
//!
//! With `Ψ = QR` and `R M Rᵀ = V Λ̂ Vᵀ`, the columns of `P∥ = QV` are
//! eigenvectors of `B` with eigenvalues `Λ̂ + γ`; every vector orthogonal
//! to them is an eigenvector with eigenvalue `γ`. The multiplier `σ` is the
//! root of `1/‖p(σ)‖ − 1/δ`, evaluated from `P∥ᵀg` and `‖g⊥‖` only.

use std::time::Instant;

use crate::linalg::{axpy, norm, qr_thin, solve_small, sym_eig, DenseMatrix, LinalgError, Lu};
use crate::memory::{CompactFactors, CurvatureMemory, DEFAULT_EPS_CURV, DEFAULT_MEMORY};
use crate::problems::{Evaluation, Objective};
use crate::record::{Counters, IterationRecord, RunOutcome};
use crate::{Error, Result};

/// `|φ(σ)| ≤ PHI_TOL / δ` ends the root search.
const PHI_TOL: f64 = 1e-10;
const MAX_ROOT_ITERS: usize = 200;

/// Global minimizer of the trust-region subproblem with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrSolution {
    pub p: Vec<f64>,
    /// Multiplier `σ* ≥ 0`.
    pub sigma: f64,
    pub on_boundary: bool,
    /// `‖(B + σI)p + g‖`.
    pub opt_residual: f64,
    /// `|σ(δ − ‖p‖)|`.
    pub compl_residual: f64,
    /// `Q(p)`.
    pub model: f64,
    /// Smallest eigenvalue of `B + σI`.
    pub min_shifted_eig: f64,
    /// Pairs removed because `Ψ` was numerically rank deficient.
    pub dropped_pairs: usize,
    /// Whether the hard case (`g ⟂` leading eigenspace) was taken.
    pub hard_case: bool,
}

/// Eigen-decomposition of `B`: explicit eigenpairs plus, when
/// `perp_dim > 0`, the eigenvalue `γ` on the orthogonal complement.
struct Spectrum {
    basis: DenseMatrix,
    eigvals: Vec<f64>,
    gamma: f64,
    perp_dim: usize,
}

fn spectrum(factors: &CompactFactors) -> Result<(Spectrum, CompactFactors, usize)> {
    let mut f = factors.clone();
    let mut dropped = 0;
    loop {
        let k = f.num_pairs();
        match decompose(&f) {
            Ok(s) => return Ok((s, f, dropped)),
            // Dependent columns of Ψ: drop the pair owning the column.
            Err(LinalgError::RankDeficient { column }) => f = f.without_pair(column % k),
            // Numerically singular M⁻¹ (more pairs than directions): drop the oldest.
            Err(LinalgError::Singular) if k > 0 => f = f.without_pair(0),
            Err(e) => return Err(e.into()),
        }
        dropped += 1;
    }
}

fn decompose(f: &CompactFactors) -> Result<Spectrum, LinalgError> {
    let (n, k) = (f.dim(), f.num_pairs());
    if k == 0 {
        return Ok(Spectrum {
            basis: DenseMatrix::zeros(n, 0),
            eigvals: Vec::new(),
            gamma: f.gamma,
            perp_dim: n,
        });
    }
    let lu = Lu::factor(&f.m_inv)?;
    if 2 * k >= n {
        // Small problem: decompose B itself.
        let mut b = DenseMatrix::identity(n)
            .scale(f.gamma)
            .add(&f.psi.matmul(&lu.solve_matrix(&f.psi.transpose())));
        b.symmetrize();
        let eig = sym_eig(&b)?;
        return Ok(Spectrum {
            basis: eig.eigvecs,
            eigvals: eig.eigvals,
            gamma: f.gamma,
            perp_dim: 0,
        });
    }
    let (q, r) = qr_thin(&f.psi)?;
    let mut rmr = r.matmul(&lu.solve_matrix(&r.transpose()));
    rmr.symmetrize();
    let eig = sym_eig(&rmr)?;
    Ok(Spectrum {
        basis: q.matmul(&eig.eigvecs),
        eigvals: eig.eigvals.iter().map(|l| l + f.gamma).collect(),
        gamma: f.gamma,
        perp_dim: n - 2 * k,
    })
}

/// `(c², λ)` terms of `‖p(σ)‖² = Σ c²/(λ + σ)²`.
struct Secular {
    terms: Vec<(f64, f64)>,
}

impl Secular {
    fn norm(&self, sigma: f64) -> f64 {
        self.terms
            .iter()
            .filter(|(c2, _)| *c2 > 0.0)
            .map(|&(c2, l)| c2 / ((l + sigma) * (l + sigma)))
            .sum::<f64>()
            .sqrt()
    }

    /// `φ'(σ) = Σ c²/(λ+σ)³ / ‖p‖³`.
    fn phi_prime(&self, sigma: f64) -> f64 {
        let nrm = self.norm(sigma);
        let s: f64 = self
            .terms
            .iter()
            .filter(|(c2, _)| *c2 > 0.0)
            .map(|&(c2, l)| c2 / (l + sigma).powi(3))
            .sum();
        s / nrm.powi(3)
    }
}

/// Safeguarded Newton for `1/‖p(σ)‖ = 1/δ` on `[lo, hi]`, `φ(lo) < 0 ≤ φ(hi)`.
fn secular_root(sec: &Secular, delta: f64, lo: f64, hi: f64, start: f64) -> Result<f64> {
    let phi = |s: f64| 1.0 / sec.norm(s) - 1.0 / delta;
    let (mut a, mut b) = (lo, hi);
    let mut sigma = start;
    let mut best = f64::INFINITY;
    for _ in 0..MAX_ROOT_ITERS {
        let f = phi(sigma);
        best = best.min(f.abs());
        if f.abs() <= PHI_TOL / delta {
            return Ok(sigma);
        }
        if f < 0.0 {
            a = sigma;
        } else {
            b = sigma;
        }
        if b - a <= 4.0 * f64::EPSILON * b.abs().max(1.0) {
            return Ok(b);
        }
        let next = sigma - f / sec.phi_prime(sigma);
        sigma = if next.is_finite() && next > a && next < b {
            next
        } else {
            0.5 * (a + b)
        };
    }
    Err(Error::HardCaseUnresolved { residual: best })
}

/// Unit vector in the `λ_min` eigenspace.
fn leading_eigvec(spec: &Spectrum, lam_min: f64, tol: f64) -> Vec<f64> {
    if let Some(i) = spec.eigvals.iter().position(|&l| l <= lam_min + tol) {
        return spec.basis.column(i);
    }
    // λ_min = γ on the orthogonal complement: project the best unit vector.
    let n = spec.basis.rows();
    let mut best = vec![0.0; n];
    let mut best_norm = -1.0;
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let coeffs = spec.basis.row(j).to_vec();
        axpy(&mut e, -1.0, &spec.basis.matvec(&coeffs));
        let en = norm(&e);
        if en > best_norm {
            best_norm = en;
            best = e;
        }
    }
    best.iter().map(|v| v / best_norm).collect()
}

/// `p = −(1/τ)[g − Ψ(τM⁻¹ + ΨᵀΨ)⁻¹Ψᵀg]`, i.e. `−(B + σI)⁻¹g` with `τ = γ + σ`.
fn smw_step(f: &CompactFactors, g: &[f64], sigma: f64) -> Option<Vec<f64>> {
    let tau = f.gamma + sigma;
    let mut inner = g.to_vec();
    if f.num_pairs() > 0 {
        let gram = f.psi.transpose().matmul(&f.psi);
        let system = f.m_inv.scale(tau).add(&gram);
        let z = solve_small(&system, &f.psi.tr_matvec(g)).ok()?;
        axpy(&mut inner, -1.0, &f.psi.matvec(&z));
    }
    Some(inner.iter().map(|v| -v / tau).collect())
}

/// `−(B + σI)⁺ g` in spectral coordinates, skipping eigen-directions in `skip`.
fn spectral_step(spec: &Spectrum, g_par: &[f64], g_perp: &[f64], sigma: f64, skip: &[bool]) -> Vec<f64> {
    let coeffs: Vec<f64> = g_par
        .iter()
        .zip(&spec.eigvals)
        .zip(skip)
        .map(|((c, l), &s)| if s { 0.0 } else { -c / (l + sigma) })
        .collect();
    let mut p = spec.basis.matvec(&coeffs);
    if spec.perp_dim > 0 && !skip.get(spec.eigvals.len()).copied().unwrap_or(false) {
        axpy(&mut p, -1.0 / (spec.gamma + sigma), g_perp);
    }
    p
}

/// Global solution of the trust-region subproblem for `B = γI + ΨMΨᵀ`.
pub fn solve_subproblem(factors: &CompactFactors, g: &[f64], delta: f64) -> Result<TrSolution> {
    let n = factors.dim();
    if g.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: g.len(),
        });
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Config(format!("trust-region radius must be positive, got {delta}")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }

    // Pairs whose compact form is too ill-conditioned to reproduce B are
    // dropped oldest first until the step certifies.
    let mut current = factors.clone();
    let mut dropped = 0;
    loop {
        let (spec, f, d) = spectrum(&current)?;
        dropped += d;
        let mut sol = solve_in_spectrum(&spec, &f, g, delta)?;
        if sol.opt_residual <= RETRY_RESIDUAL * norm(g).max(1.0) || f.num_pairs() == 0 {
            sol.dropped_pairs = dropped;
            return Ok(sol);
        }
        current = f.without_pair(0);
        dropped += 1;
    }
}

/// Relative optimality residual above which a solve is retried with fewer pairs.
const RETRY_RESIDUAL: f64 = 1e-9;

fn solve_in_spectrum(spec: &Spectrum, f: &CompactFactors, g: &[f64], delta: f64) -> Result<TrSolution> {
    let g_par = spec.basis.tr_matvec(g);
    let mut g_perp = g.to_vec();
    if spec.perp_dim > 0 {
        axpy(&mut g_perp, -1.0, &spec.basis.matvec(&g_par));
    } else {
        g_perp.iter_mut().for_each(|v| *v = 0.0);
    }
    let g_norm = norm(g);
    let perp_norm = norm(&g_perp);

    // All eigen-directions, the complement last.
    let mut lams = spec.eigvals.clone();
    let mut c2: Vec<f64> = g_par.iter().map(|c| c * c).collect();
    if spec.perp_dim > 0 {
        lams.push(spec.gamma);
        c2.push(perp_norm * perp_norm);
    }
    let lam_min = lams.iter().copied().fold(f64::INFINITY, f64::min);
    let lam_scale = lams.iter().fold(1f64, |a, l| a.max(l.abs()));
    let eig_tol = 1e-12 * lam_scale;
    let sec = Secular {
        terms: c2.iter().copied().zip(lams.iter().copied()).collect(),
    };

    let mut hard_case = false;
    let (sigma, p) = if lam_min > eig_tol && sec.norm(0.0) <= delta {
        (0.0, None)
    } else {
        let lo = (-lam_min).max(0.0);
        // Components of g in the λ_min eigenspace.
        let skip: Vec<bool> = lams
            .iter()
            .zip(&c2)
            .map(|(&l, &c)| l <= lam_min + eig_tol && c <= (1e-12 * g_norm.max(1e-300)).powi(2))
            .collect();
        let degenerate_all = lams
            .iter()
            .zip(&skip)
            .all(|(&l, &s)| l > lam_min + eig_tol || s);
        let reduced = Secular {
            terms: sec
                .terms
                .iter()
                .zip(&skip)
                .filter(|(_, &s)| !s)
                .map(|(&t, _)| t)
                .collect(),
        };
        if lam_min <= eig_tol && degenerate_all && reduced.norm(lo) <= delta {
            hard_case = true;
            let mut p = spectral_step(spec, &g_par, &g_perp, lo, &skip);
            let z = leading_eigvec(spec, lam_min, eig_tol);
            let pn = norm(&p);
            let tau = (delta * delta - pn * pn).max(0.0).sqrt();
            axpy(&mut p, tau, &z);
            (lo, Some(p))
        } else {
            let hi = (g_norm / delta - lam_min).max(lo);
            let start = if lo > 0.0 { 0.5 * (lo + hi) } else { lo };
            (secular_root(&sec, delta, lo, hi, start)?, None)
        }
    };

    let mut p = match p {
        Some(p) => p,
        None => {
            let spectral = spectral_step(spec, &g_par, &g_perp, sigma, &vec![false; lams.len()]);
            match smw_step(f, g, sigma) {
                Some(smw) if residual(f, g, &smw, sigma)? <= residual(f, g, &spectral, sigma)? => smw,
                _ => spectral,
            }
        }
    };
    let on_boundary = sigma > 0.0 || hard_case;
    let pn = norm(&p);
    if pn > delta {
        let shrink = delta / pn;
        p.iter_mut().for_each(|v| *v *= shrink);
    }
    let opt_residual = residual(f, g, &p, sigma)?;
    Ok(TrSolution {
        compl_residual: (sigma * (delta - norm(&p))).abs(),
        model: f.quadratic_model(g, &p)?,
        min_shifted_eig: lam_min + sigma,
        opt_residual,
        p,
        sigma,
        on_boundary,
        dropped_pairs: 0,
        hard_case,
    })
}

/// `‖(B + σI)p + g‖`.
fn residual(f: &CompactFactors, g: &[f64], p: &[f64], sigma: f64) -> Result<f64> {
    let mut r = f.apply(p)?;
    axpy(&mut r, sigma, p);
    axpy(&mut r, 1.0, g);
    Ok(norm(&r))
}

/// Radius schedule and stopping rule of the trust-region driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrConfig {
    pub delta0: f64,
    pub delta_max: f64,
    /// A trial is accepted iff `ρ > eta`.
    pub eta: f64,
    /// Factor applied to `δ` when `ρ < ¼`.
    pub shrink: f64,
    /// Factor applied to `δ` when `ρ > ¾` on the boundary.
    pub grow: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub memory: usize,
    pub eps_curv: f64,
}

impl Default for TrConfig {
    fn default() -> Self {
        Self {
            delta0: 1.0,
            delta_max: 1e4,
            eta: 1e-4,
            shrink: 0.25,
            grow: 2.0,
            grad_tol: 1e-5,
            max_iters: 200,
            memory: DEFAULT_MEMORY,
            eps_curv: DEFAULT_EPS_CURV,
        }
    }
}

impl TrConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.delta0
            && self.delta0 < self.delta_max
            && (0.0..0.25).contains(&self.eta)
            && 0.0 < self.shrink
            && self.shrink < 1.0
            && self.grow > 1.0
            && self.grad_tol > 0.0
            && self.memory > 0
            && self.eps_curv >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid trust-region configuration {self:?}")))
        }
    }
}

/// `ρ < ¼ → shrink·δ`; `ρ > ¾` with `‖p‖ ≥ 0.99δ → min(grow·δ, δ_max)`;
/// otherwise `δ`. A non-finite `ρ` shrinks.
pub fn radius_update(rho: f64, delta: f64, step_norm: f64, cfg: &TrConfig) -> f64 {
    if !(rho >= 0.25) {
        cfg.shrink * delta
    } else if rho > 0.75 && step_norm >= 0.99 * delta {
        (cfg.grow * delta).min(cfg.delta_max)
    } else {
        delta
    }
}

/// Trust-region L-BFGS from `w0`.
///
/// Per iteration: solve the subproblem at the current radius, evaluate the
/// trial point, compute `ρ = ared / pred`, update the radius, then accept
/// the trial iff `ρ > eta`. The pair `(p, Δg)` is offered to the memory
/// for accepted and rejected trials alike.
pub fn tr_minimize<O: Objective + ?Sized>(oracle: &O, w0: &[f64], cfg: &TrConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let n = oracle.dim();
    let mut counters = Counters::default();
    let mut w = w0.to_vec();
    let Evaluation { loss: mut f, grad: mut g } = oracle.eval(&w)?;
    counters.tick();
    let mut mem = CurvatureMemory::new(n, cfg.memory);
    let mut delta = cfg.delta0;
    let mut records = Vec::new();

    for iter in 1..=cfg.max_iters {
        if norm(&g) < cfg.grad_tol {
            break;
        }
        let sol = solve_subproblem(&mem.factors(), &g, delta)?;
        let pred = -sol.model;
        if !(pred > 0.0) {
            return Err(Error::NonPositivePred { pred });
        }
        let trial: Vec<f64> = w.iter().zip(&sol.p).map(|(a, b)| a + b).collect();
        let e = oracle.eval(&trial)?;
        counters.tick();
        let rho = actual_reduction(f, &g, &e, &sol.p) / pred;
        let rho = rho.is_finite().then_some(rho);

        let used = delta;
        delta = radius_update(rho.unwrap_or(f64::NAN), delta, norm(&sol.p), cfg);
        if e.grad.iter().all(|v| v.is_finite()) {
            let y: Vec<f64> = e.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
            mem.try_accept_pair(&sol.p, &y, cfg.eps_curv)?;
        }
        let accepted = rho.is_some_and(|r| r > cfg.eta);
        if accepted {
            w = trial;
            f = e.loss;
            g = e.grad;
        }
        records.push(IterationRecord {
            iter,
            loss: f,
            grad_norm: norm(&g),
            step_param: used,
            rho,
            accepted,
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

/// `L(w) − L(w + p)`; once that difference is at rounding level of `L`,
/// the trapezoidal estimate `−½(g + g_new)ᵀp` (exact on quadratics) is
/// used instead.
fn actual_reduction(f: f64, g: &[f64], trial: &Evaluation, p: &[f64]) -> f64 {
    let ared = f - trial.loss;
    if ared.abs() > ARED_NOISE * f.abs().max(1.0) || !trial.grad.iter().all(|v| v.is_finite()) {
        return ared;
    }
    -0.5 * g.iter().zip(&trial.grad).zip(p).map(|((a, b), pi)| (a + b) * pi).sum::<f64>()
}

/// Relative size of loss differences treated as rounding noise.
const ARED_NOISE: f64 = 1e3 * f64::EPSILON;

/// Checks the optimality certificate of `sol` for radius `delta`.
pub fn certificate_holds(sol: &TrSolution, g: &[f64], delta: f64) -> bool {
    sol.sigma >= 0.0
        && norm(&sol.p) <= delta * (1.0 + 1e-8)
        && sol.opt_residual <= 1e-6 * norm(g).max(1.0)
        && sol.compl_residual <= 1e-6 * delta.max(1.0)
        && sol.min_shifted_eig >= -1e-10
}
