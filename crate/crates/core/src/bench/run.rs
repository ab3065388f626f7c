use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::linesearch::{ls_minimize, DriverConfig, WolfeParams};
use crate::multibatch::{multibatch_lbfgs, sgd_minimize, MultiBatchConfig, StepRule};
use crate::problems::{
    load_mnist_dir, synthetic_digits, DataError, Dataset, Logistic, Mlp, MlpSpec, Objective, Quadratic, Rosenbrock,
};
use crate::record::{IterationRecord, RunOutcome};
use crate::rl::{policy_matches, train_qlearning, EvalPoint, Gridworld, QConfig};
use crate::trustregion::{tr_minimize, TrConfig};
use crate::{Error, Result};

use super::config::{Method, RunConfig, Task};

/// Final figures of one run, written as `summary.json`.
///
/// Non-finite reals are stored as absent so the document always parses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub task: Task,
    pub method: Method,
    pub seed: u64,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_norm: Option<f64>,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_eval_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_value_gap: Option<f64>,
    /// Floor cells whose greedy action is optimal, out of `policy_states`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_matched: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_states: Option<usize>,
    pub fevals: usize,
    pub gevals: usize,
    pub wall_ms: f64,
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summaries always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad summary: {e}")))
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Everything a run produces before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: RunConfig,
    pub records: Vec<IterationRecord>,
    pub summary: Summary,
    /// Frozen-policy evaluations (gridworld only).
    pub evals: Vec<EvalPoint>,
    pub w: Vec<f64>,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        self.summary.converged
    }
}

enum Problem {
    Quadratic(Quadratic),
    Rosenbrock(Rosenbrock),
    Logistic(Logistic),
    Classifier { train: Mlp, test: Mlp },
}

impl Problem {
    fn build(cfg: &RunConfig) -> Result<Self> {
        let dim = cfg.dim.unwrap_or(1);
        let samples = cfg.samples.unwrap_or(1);
        Ok(match cfg.task {
            Task::Quadratic => Problem::Quadratic(
                Quadratic::with_spectrum(dim, 1.0, 10.0, cfg.seed).with_samples(samples, 0.1, cfg.seed + 1),
            ),
            Task::Rosenbrock => Problem::Rosenbrock(Rosenbrock::new(dim)),
            Task::Logistic => Problem::Logistic(Logistic::synthetic(samples, dim, cfg.seed)),
            Task::Mnist => {
                let (train, test) = classification_data(cfg, samples)?;
                let spec = MlpSpec::new(&[train.dim(), cfg.hidden.unwrap_or(64), train.num_classes()])?;
                Problem::Classifier {
                    train: Mlp::new(spec.clone(), train)?,
                    test: Mlp::new(spec, test)?,
                }
            }
            Task::Gridworld => unreachable!("gridworld has no static objective"),
        })
    }

    fn objective(&self) -> &dyn Objective {
        match self {
            Problem::Quadratic(q) => q,
            Problem::Rosenbrock(r) => r,
            Problem::Logistic(l) => l,
            Problem::Classifier { train, .. } => train,
        }
    }

    fn start(&self, seed: u64) -> Vec<f64> {
        match self {
            Problem::Rosenbrock(r) => r.standard_start(),
            Problem::Classifier { train, .. } => train.spec().init_params(seed),
            other => vec![0.0; other.objective().dim()],
        }
    }
}

/// Training and held-out sets: the first `2·samples` MNIST images when a
/// data directory is configured, the seeded synthetic digits otherwise.
fn classification_data(cfg: &RunConfig, samples: usize) -> Result<(Dataset, Dataset)> {
    let all = match &cfg.data_dir {
        Some(dir) => load_mnist_dir(dir)?,
        None => synthetic_digits(2 * samples, cfg.seed),
    };
    if all.len() < 2 * samples {
        return Err(DataError::ShapeMismatch(format!(
            "{} examples cannot provide {samples} training and {samples} test examples",
            all.len()
        ))
        .into());
    }
    Ok((all.head(samples), all.slice(samples, 2 * samples)))
}

/// Executes one configured run. The configuration is resolved first, so
/// invalid settings fail before any work is done.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let cfg = cfg.clone().resolve()?;
    let start = Instant::now();
    if cfg.task == Task::Gridworld {
        return run_gridworld(cfg, start);
    }
    let problem = Problem::build(&cfg)?;
    let obj = problem.objective();
    let w0 = problem.start(cfg.seed);
    let n = obj.num_samples();
    let out: RunOutcome = match cfg.method {
        Method::LsLbfgs if cfg.is_multibatch() => multibatch_lbfgs(
            obj,
            &w0,
            &MultiBatchConfig {
                batch: cfg.b.unwrap_or(n),
                overlap_frac: cfg.overlap,
                memory: cfg.m,
                iters: cfg.max_iters,
                step: StepRule::Wolfe(WolfeParams::default()),
                seed: cfg.seed,
                ..MultiBatchConfig::default()
            },
        )?,
        Method::LsLbfgs => ls_minimize(
            obj,
            &w0,
            &DriverConfig {
                grad_tol: cfg.grad_tol,
                max_iters: cfg.max_iters,
                memory: cfg.m,
                ..DriverConfig::default()
            },
            &WolfeParams::default(),
        )?,
        Method::TrLbfgs => tr_minimize(
            obj,
            &w0,
            &TrConfig {
                grad_tol: cfg.grad_tol,
                max_iters: cfg.max_iters,
                memory: cfg.m,
                ..TrConfig::default()
            },
        )?,
        Method::Sgd => sgd_minimize(
            obj,
            &w0,
            cfg.lr.unwrap_or(0.0),
            cfg.b.unwrap_or(n),
            cfg.max_iters,
            cfg.seed,
        )?,
    };
    let mut summary = Summary {
        task: cfg.task,
        method: cfg.method,
        seed: cfg.seed,
        iterations: out.iterations(),
        final_loss: finite(out.loss),
        grad_norm: finite(out.grad_norm),
        converged: out.grad_norm < cfg.grad_tol,
        train_accuracy: None,
        test_loss: None,
        test_accuracy: None,
        best_eval_score: None,
        final_value_gap: None,
        policy_matched: None,
        policy_states: None,
        fevals: out.counters.fevals,
        gevals: out.counters.gevals,
        wall_ms: 0.0,
    };
    match &problem {
        Problem::Logistic(l) => summary.train_accuracy = Some(l.accuracy(&out.w)),
        Problem::Classifier { train, test } => {
            summary.train_accuracy = Some(train.accuracy(&out.w));
            summary.test_accuracy = Some(test.accuracy(&out.w));
            summary.test_loss = finite(test.eval(&out.w)?.loss);
        }
        _ => {}
    }
    summary.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(finish(cfg, out.records, summary, Vec::new(), out.w))
}

fn run_gridworld(cfg: RunConfig, start: Instant) -> Result<RunReport> {
    let env = match &cfg.map {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| DataError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            text.parse::<Gridworld>()?
        }
        None => Gridworld::default(),
    };
    let defaults = QConfig::default();
    let qcfg = QConfig {
        batch: cfg.b.unwrap_or(defaults.batch),
        memory: cfg.m,
        episodes: cfg.episodes.unwrap_or(defaults.episodes),
        seed: cfg.seed,
        ..defaults
    };
    let q_run = train_qlearning(&env, &qcfg)?;
    let oracle = env.value_iteration(1e-12);
    let matched = policy_matches(&env, &q_run.q, &oracle, 1e-9);
    let states = env.states().len();
    let last = q_run.records.last();
    let summary = Summary {
        task: cfg.task,
        method: cfg.method,
        seed: cfg.seed,
        iterations: q_run.records.len(),
        final_loss: last.and_then(|r| finite(r.loss)),
        grad_norm: last.and_then(|r| finite(r.grad_norm)),
        converged: matched == states,
        train_accuracy: None,
        test_loss: None,
        test_accuracy: None,
        best_eval_score: finite(q_run.best_score()),
        final_value_gap: finite(q_run.final_eval().value_gap),
        policy_matched: Some(matched),
        policy_states: Some(states),
        fevals: q_run.counters.fevals,
        gevals: q_run.counters.gevals,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    let w = q_run.q.params().to_vec();
    Ok(finish(cfg, q_run.records, summary, q_run.evals, w))
}

fn finish(
    config: RunConfig,
    mut records: Vec<IterationRecord>,
    summary: Summary,
    evals: Vec<EvalPoint>,
    w: Vec<f64>,
) -> RunReport {
    if !config.wall_clock {
        records.iter_mut().for_each(|r| r.wall_ms = 0.0);
    }
    RunReport {
        config,
        records,
        summary,
        evals,
        w,
    }
}

/// Record CSV with the fixed header.
pub fn records_csv(records: &[IterationRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if records.is_empty() {
        w.write_record(crate::record::CSV_HEADER.split(','))
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn eval_csv(evals: &[EvalPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in evals {
        w.serialize(e).map_err(|e| Error::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| {
        DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
        .into()
    })
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| {
        DataError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        }
        .into()
    })
}

/// Writes `records.csv`, `summary.json`, `config.echo` and, for gridworld
/// runs, `eval.csv` (`step,score,value_gap`) into `dir`.
pub fn write_artifacts(dir: &Path, report: &RunReport) -> Result<()> {
    let records = records_csv(&report.records)?;
    let summary = report.summary.to_json();
    debug_assert_eq!(Summary::from_json(&summary).map(|s| s.to_json()).ok(), Some(summary.clone()));
    create_dir(dir)?;
    write_file(dir, "records.csv", &records)?;
    write_file(dir, "summary.json", &(summary + "\n"))?;
    write_file(dir, "config.echo", &report.config.to_toml())?;
    if !report.evals.is_empty() {
        write_file(dir, "eval.csv", &eval_csv(&report.evals)?)?;
    }
    Ok(())
}
