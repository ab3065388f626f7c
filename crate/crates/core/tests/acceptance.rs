//! Acceptance gate: one PASS/FAIL line per criterion, each with its
//! tolerance and wall-clock limit. Exits non-zero if any criterion fails.

mod common;

use std::cell::Cell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use qnopt::bench::{probe_bound, run, Method, ProbeConfig, RunConfig, Task, DATA_DIR_ENV};
use qnopt::direction::two_loop;
use qnopt::linesearch::{ls_minimize, DriverConfig, WolfeParams};
use qnopt::memory::DEFAULT_EPS_CURV;
use qnopt::multibatch::{cost_ratio, CostParams};
use qnopt::problems::{lenet5, param_count, synthetic_digits, Logistic, Mlp, MlpSpec, Quadratic, Rosenbrock};
use qnopt::rl::{
    policy_matches, train_qlearning, Action, BellmanBatch, Experience, Gridworld, QConfig, QFunction,
};
use qnopt::trustregion::{solve_subproblem, tr_minimize, TrConfig};
use qnopt::{CurvatureMemory, Objective};
use rand::Rng;

use common::{bfgs, brute_force_tr, compact_dense, inverse_bfgs, min_eig, model, noisy_memory, random_vec, rng};

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn compact_fidelity() -> Outcome {
    let mut worst = 0.0f64;
    let mut r = rng(1);
    for i in 0..200 {
        let n = r.random_range(1..=64);
        let m = r.random_range(1..=8);
        let mem = noisy_memory(1000 + i, n, m, r.random_range(1..=2 * m + 2));
        let reference = bfgs(&mem);
        let compact = compact_dense(&mem.compact_rep().map_err(|e| e.to_string())?);
        worst = worst.max((compact - &reference).norm() / reference.norm());
    }
    ensure(worst <= 1e-9, format!("worst ‖B_compact − B_dense‖_F/‖B_dense‖_F = {worst:.2e} (tol 1e-9), 200 instances"))
}

fn two_loop_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut r = rng(2);
    for i in 0..200 {
        let n = r.random_range(1..=64);
        let m = r.random_range(1..=8);
        let mem = noisy_memory(2000 + i, n, m, r.random_range(0..=2 * m + 2));
        let g = random_vec(&mut r, n);
        let p = DVector::from_vec(two_loop(&mem, &g).map_err(|e| e.to_string())?);
        let reference = -(inverse_bfgs(&mem) * DVector::from_vec(g));
        worst = worst.max((p - &reference).norm() / reference.norm());
    }
    ensure(worst <= 1e-10, format!("worst ‖p − (−H g)‖/‖H g‖ = {worst:.2e} (tol 1e-10), 200 instances"))
}

fn tr_subproblem() -> Outcome {
    let mut r = rng(3);
    let (mut interior, mut boundary) = (0, 0);
    let mut worst = [0.0f64; 5];
    for i in 0..100 {
        let n = r.random_range(2..=40);
        let m = r.random_range(1..=8);
        let mem = noisy_memory(3000 + i, n, m, r.random_range(1..=2 * m + 2));
        let b = bfgs(&mem);
        let g = DVector::from_vec(random_vec(&mut r, n)) * 10f64.powf(r.random_range(-2.0..2.0));
        let newton = b.clone().lu().solve(&g).ok_or("singular B")?.norm();
        let delta = if i % 2 == 0 { newton * r.random_range(1.05..3.0) } else { newton * r.random_range(0.01..0.9) };
        let sol = solve_subproblem(&mem.factors(), g.as_slice(), delta).map_err(|e| e.to_string())?;
        let p = DVector::from_column_slice(&sol.p);
        if sol.on_boundary {
            boundary += 1;
        } else {
            interior += 1;
        }
        let shifted = &b + DMatrix::identity(n, n) * sol.sigma;
        let opt = (&shifted * &p + &g).norm() / g.norm().max(1.0);
        let compl = (sol.sigma * (delta - p.norm())).abs() / delta.max(1.0);
        let feas = (p.norm() / delta - 1.0).max(0.0) + (-sol.sigma).max(0.0);
        let psd = (-min_eig(&shifted)).max(0.0);
        let q_best = model(&b, &g, &brute_force_tr(&b, &g, delta));
        let q_gap = (model(&b, &g, &p) - q_best).abs() / q_best.abs().max(1.0);
        for (w, v) in worst.iter_mut().zip([opt, compl, feas, psd, q_gap]) {
            *w = w.max(v);
        }
    }
    let detail = format!(
        "{interior} interior / {boundary} boundary; worst residuals: stationarity {:.1e}, complementarity {:.1e}, \
         feasibility {:.1e}, PSD {:.1e}; |Q − Q_bruteforce| {:.1e} (tol 1e-6)",
        worst[0], worst[1], worst[2], worst[3], worst[4]
    );
    ensure(interior > 0 && boundary > 0 && worst.iter().all(|&w| w <= 1e-6), detail)
}

fn secant_and_pd() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 500,
        failure_persistence: None,
        rng_seed: proptest::test_runner::RngSeed::Fixed(4),
        ..PropConfig::default()
    });
    let strategy = (any::<u64>(), 1usize..=32, 1usize..=8, 1usize..=24, 0.0f64..0.5);
    let worst_secant = Cell::new(0.0f64);
    let min_lambda = Cell::new(f64::INFINITY);
    let nonempty = Cell::new(0);
    runner
        .run(&strategy, |(seed, n, m, offered, bad_frac)| {
            let mut r = rng(seed);
            let a = {
                let g = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
                g.transpose() * &g / n as f64 + DMatrix::identity(n, n) * 0.1
            };
            let mut mem = CurvatureMemory::new(n, m);
            for _ in 0..offered {
                let s = DVector::from_vec(random_vec(&mut r, n));
                let y = if r.random_bool(bad_frac) {
                    -(&a * &s)
                } else {
                    &a * &s + DVector::from_vec(random_vec(&mut r, n)) * 0.2
                };
                mem.try_accept_pair(s.as_slice(), y.as_slice(), DEFAULT_EPS_CURV).unwrap();
            }
            let Some(last) = mem.latest() else {
                return Ok(());
            };
            let b = bfgs(&mem);
            let crate_b = common::to_na(&mem.bfgs_dense().unwrap());
            let y = DVector::from_column_slice(last.y());
            let s = DVector::from_column_slice(last.s());
            let scale = y.norm().max(1.0);
            let err = ((&b * &s - &y).norm() / scale).max((&crate_b * &s - &y).norm() / scale);
            let lmin = min_eig(&b).min(min_eig(&crate_b));
            worst_secant.set(worst_secant.get().max(err));
            min_lambda.set(min_lambda.get().min(lmin));
            nonempty.set(nonempty.get() + 1);
            prop_assert!(err <= 1e-10, "secant residual {}", err);
            prop_assert!(lmin > 0.0, "min eigenvalue {}", lmin);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "500 sequences ({} non-empty): worst ‖B s − y‖/max(1,‖y‖) = {:.1e} (tol 1e-10), min eigenvalue {:.2e} > 0",
        nonempty.get(),
        worst_secant.get(),
        min_lambda.get()
    ))
}

fn lenet_count() -> Outcome {
    let n = param_count(&lenet5());
    ensure(n == 431_080, format!("LeNet-5 trainable parameters = {n} (expected 431080)"))
}

fn rosenbrock() -> Outcome {
    let f = Rosenbrock::new(2);
    let w0 = f.standard_start();
    let ls = ls_minimize(&f, &w0, &DriverConfig::default(), &WolfeParams::default()).map_err(|e| e.to_string())?;
    let tr = tr_minimize(&f, &w0, &TrConfig::default()).map_err(|e| e.to_string())?;
    let dist = |w: &[f64]| ((w[0] - 1.0).powi(2) + (w[1] - 1.0).powi(2)).sqrt();
    let ok = |o: &qnopt::record::RunOutcome| o.grad_norm < 1e-5 && o.iterations() <= 200 && dist(&o.w) <= 1e-4;
    ensure(
        ok(&ls) && ok(&tr),
        format!(
            "line search: {} iters, ‖g‖ {:.1e}, ‖w − 1‖ {:.1e}; trust region: {} iters, ‖g‖ {:.1e}, ‖w − 1‖ {:.1e} \
             (need ‖g‖ < 1e-5, ≤ 200 iters, ‖w − 1‖ ≤ 1e-4)",
            ls.iterations(),
            ls.grad_norm,
            dist(&ls.w),
            tr.iterations(),
            tr.grad_norm,
            dist(&tr.w)
        ),
    )
}

fn mnist_cfg(method: Method) -> RunConfig {
    let mut c = RunConfig::new(Task::Mnist, method);
    c.m = 20;
    c.max_iters = 200;
    c.data_dir = std::env::var(DATA_DIR_ENV).ok().map(Into::into);
    c
}

fn classification() -> Outcome {
    let acc = |c: RunConfig| -> Result<f64, String> {
        let r = run(&c).map_err(|e| e.to_string())?;
        Ok(r.summary.train_accuracy.unwrap_or(0.0))
    };
    let ls = acc(mnist_cfg(Method::LsLbfgs))?;
    let tr = acc(mnist_cfg(Method::TrLbfgs))?;
    let sgd = |lr: f64| {
        let mut c = mnist_cfg(Method::Sgd);
        c.lr = Some(lr);
        c.b = Some(32);
        acc(c)
    };
    let (large, tuned) = (sgd(1.0)?, sgd(0.1)?);
    let source = if std::env::var(DATA_DIR_ENV).is_ok() { "MNIST" } else { "synthetic digits" };
    ensure(
        ls >= 0.9 && tr >= 0.9 && large < 0.9 && tuned >= 0.9,
        format!(
            "784-64-10 on 1000 {source}, 200 iters: ls-lbfgs {:.1}%, tr-lbfgs {:.1}% (need ≥ 90%); \
             sgd b=32 lr=1.0 {:.1}% (need < 90%), lr=0.1 {:.1}% (need ≥ 90%)",
            100.0 * ls,
            100.0 * tr,
            100.0 * large,
            100.0 * tuned
        ),
    )
}

fn probe() -> Outcome {
    let full = probe_bound(&ProbeConfig::default()).map_err(|e| e.to_string())?;
    let sub = probe_bound(&ProbeConfig {
        batch: Some(16),
        ..ProbeConfig::default()
    })
    .map_err(|e| e.to_string())?;
    ensure(
        full.final_offset().abs() < 1e-12
            && full.fitted_rate < 1.0
            && full.bound_holds
            && sub.plateau > 1e-8
            && sub.bound_holds,
        format!(
            "full batch: final offset {:.1e} (< 1e-12), log-linear rate {:.3}, bound holds {}; \
             batch 16: plateau {:.2e} (> 0), bound holds {}",
            full.final_offset(),
            full.fitted_rate,
            full.bound_holds,
            sub.plateau,
            sub.bound_holds
        ),
    )
}

fn cost_model() -> Outcome {
    let c = cost_ratio(&CostParams {
        b: 2048.0,
        b_s: 32.0,
        f: 4.0,
        z: 5.0,
        m: 20.0,
    });
    ensure((c - 0.6299).abs() <= 5e-4, format!("cost_ratio(2048, 32, 4, 5, 20) = {c:.6} (0.6299 ± 0.0005)"))
}

fn gridworld() -> Outcome {
    let env = Gridworld::default();
    let oracle = env.value_iteration(1e-12);
    let states = env.states().len();
    let mut lines = Vec::new();
    let (mut matched_seeds, mut worst_gap) = (0, 0.0f64);
    for seed in 0..5 {
        let cfg = QConfig {
            seed,
            ..QConfig::default()
        };
        let out = train_qlearning(&env, &cfg).map_err(|e| e.to_string())?;
        let matched = policy_matches(&env, &out.q, &oracle, 1e-9);
        let gap = out.final_eval().value_gap;
        matched_seeds += usize::from(matched == states);
        worst_gap = worst_gap.max(gap);
        lines.push(format!("seed {seed}: {matched}/{states}, gap {gap:.3}"));
    }
    ensure(
        matched_seeds >= 4 && worst_gap < 0.25,
        format!(
            "γ = {}, b = 128, m = 20; {matched_seeds}/5 seeds match the optimal policy (need ≥ 4), \
             worst final value gap {worst_gap:.3} (< 0.25) [{}]",
            env.discount(),
            lines.join("; ")
        ),
    )
}

/// Central differences with `h = 1e-5·(1 + |wᵢ|)`, error scaled by
/// `max(1, |fd|, |gᵢ|)`.
fn fd_error(obj: &dyn Objective, w: &[f64], coords: &[usize]) -> Result<f64, String> {
    let g = obj.eval(w).map_err(|e| e.to_string())?.grad;
    let loss = |v: &[f64]| obj.eval(v).map(|e| e.loss).map_err(|e| e.to_string());
    let mut worst = 0.0f64;
    let mut v = w.to_vec();
    for &i in coords {
        let h = 1e-5 * (1.0 + w[i].abs());
        v[i] = w[i] + h;
        let up = loss(&v)?;
        v[i] = w[i] - h;
        let down = loss(&v)?;
        v[i] = w[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1.0));
    }
    Ok(worst)
}

fn gradient_fidelity() -> Outcome {
    let mut r = rng(11);
    let mut report = Vec::new();
    let mut check = |name: &str, obj: &dyn Objective, points: Vec<Vec<f64>>| -> Result<f64, String> {
        let mut worst = 0.0f64;
        for w in &points {
            let coords: Vec<usize> = (0..20).map(|_| r.random_range(0..obj.dim())).collect();
            worst = worst.max(fd_error(obj, w, &coords)?);
        }
        report.push(format!("{name} {worst:.1e}"));
        Ok(worst)
    };
    let mut pr = rng(12);

    let quad = Quadratic::with_spectrum(20, 1.0, 10.0, 5).with_samples(64, 0.5, 6);
    let logistic = Logistic::synthetic(200, 20, 7);
    let spec = MlpSpec::new(&[784, 64, 10]).map_err(|e| e.to_string())?;
    let mlp = Mlp::new(spec.clone(), synthetic_digits(100, 8)).map_err(|e| e.to_string())?;
    let mlp_points = (0..5).map(|s| spec.init_params(s)).collect();

    let env = Gridworld::default();
    let mut q = QFunction::new(env.num_cells(), 32, 9).map_err(|e| e.to_string())?;
    q.advance(q.network().spec().init_params(10));
    let floor = env.states();
    let batch: Vec<Experience> = (0..128)
        .map(|_| {
            let s = floor[r_pick(&mut pr, floor.len())];
            let a = r_pick(&mut pr, Action::COUNT);
            let step = env.step(s, Action::from_index(a));
            Experience {
                s,
                a,
                r: step.reward,
                s_next: step.next,
                terminal: step.terminal,
            }
        })
        .collect();
    let bellman =
        BellmanBatch::new(q.network(), &batch, q.td_targets(&batch, env.discount())).map_err(|e| e.to_string())?;
    let bellman_points = (0..5).map(|s| q.network().spec().init_params(20 + s)).collect();

    let quad_points = points(&mut pr, quad.dim(), 3.0);
    let logistic_points = points(&mut pr, logistic.dim(), 1.0);
    let worst = [
        check("quadratic", &quad, quad_points)?,
        check("logistic", &logistic, logistic_points)?,
        check("mlp", &mlp, mlp_points)?,
        check("bellman", &bellman, bellman_points)?,
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    ensure(worst <= 1e-5, format!("20 coords × 5 points, worst relative error: {} (tol 1e-5)", report.join(", ")))
}

fn points(r: &mut rand_chacha::ChaCha8Rng, n: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..5).map(|_| random_vec(r, n).iter().map(|x| x * scale).collect()).collect()
}

fn r_pick(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> usize {
    r.random_range(0..n)
}

fn qnbench(args: &[&str], out: &Path) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_qnbench"))
        .arg("run")
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RAYON_NUM_THREADS", "2")
        .env_remove(DATA_DIR_ENV)
        .output()
        .map_err(|e| e.to_string())?;
    match status.status.code() {
        Some(0 | 4) => std::fs::read(out.join("records.csv")).map_err(|e| e.to_string()),
        code => Err(format!("qnbench {args:?} exited with {code:?}: {}", String::from_utf8_lossy(&status.stderr))),
    }
}

fn determinism() -> Outcome {
    let runs: [&[&str]; 6] = [
        &["--task", "quadratic", "--method", "ls-lbfgs", "--b", "64", "--seed", "3"],
        &["--task", "logistic", "--method", "sgd", "--lr", "0.5", "--b", "50", "--seed", "3"],
        &["--task", "rosenbrock", "--method", "tr-lbfgs"],
        &["--task", "logistic", "--method", "tr-lbfgs", "--seed", "5"],
        &["--task", "mnist", "--method", "ls-lbfgs", "--samples", "200", "--max-iters", "25", "--seed", "2"],
        &["--task", "gridworld", "--method", "ls-lbfgs", "--episodes", "300", "--seed", "1"],
    ];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rows = 0;
    for (i, args) in runs.iter().enumerate() {
        let a = qnbench(args, &dir.path().join(format!("{i}a")))?;
        let b = qnbench(args, &dir.path().join(format!("{i}b")))?;
        if a != b {
            return Err(format!("records.csv differs between repeated runs of {args:?}"));
        }
        rows += a.iter().filter(|&&c| c == b'\n').count() - 1;
    }
    Ok(format!("{} CLI configurations run twice: byte-identical records.csv ({rows} rows)", runs.len()))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "compact representation fidelity", limit: Duration::from_secs(5), check: compact_fidelity },
        Criterion { id: 2, name: "two-loop oracle equivalence", limit: Duration::from_secs(5), check: two_loop_oracle },
        Criterion { id: 3, name: "trust-region subproblem optimality", limit: Duration::from_secs(10), check: tr_subproblem },
        Criterion { id: 4, name: "secant and positive definiteness", limit: Duration::from_secs(10), check: secant_and_pd },
        Criterion { id: 5, name: "LeNet-5 parameter count", limit: Duration::from_secs(1), check: lenet_count },
        Criterion { id: 6, name: "Rosenbrock, both drivers", limit: Duration::from_secs(1), check: rosenbrock },
        Criterion { id: 7, name: "desk-scale classification", limit: Duration::from_secs(300), check: classification },
        Criterion { id: 8, name: "convergence-bound probe", limit: Duration::from_secs(10), check: probe },
        Criterion { id: 9, name: "cost model", limit: Duration::from_secs(1), check: cost_model },
        Criterion { id: 10, name: "gridworld Q-learning", limit: Duration::from_secs(120), check: gridworld },
        Criterion { id: 11, name: "gradient fidelity", limit: Duration::from_secs(30), check: gradient_fidelity },
        Criterion { id: 12, name: "CLI determinism", limit: Duration::from_secs(300), check: determinism },
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.is_none_or(|id| id == c.id)) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; over the time limit")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {:>2} {} {}: {detail} [{:.2} s, limit {} s]",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            c.limit.as_secs()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
