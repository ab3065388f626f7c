use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::config::{Method, RunConfig, Task};
use super::run::run;

/// Grid of `(method, b, m)` cells, each run for exactly `iters` iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TimingConfig {
    pub task: Task,
    pub methods: Vec<Method>,
    pub batch_sizes: Vec<usize>,
    pub memories: Vec<usize>,
    pub iters: usize,
    /// Learning rate of the SGD cells.
    pub lr: f64,
    pub seed: u64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            task: Task::Logistic,
            methods: vec![Method::LsLbfgs, Method::TrLbfgs, Method::Sgd],
            batch_sizes: vec![100, 500],
            memories: vec![5, 20],
            iters: 200,
            lr: 0.5,
            seed: 0,
        }
    }
}

/// One cell of the timing table. Trust-region cells always use the full
/// objective, so their `b` is the sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Method,
    pub b: usize,
    pub m: usize,
    pub iterations: usize,
    pub fevals: usize,
    pub gevals: usize,
    pub wall_ms: f64,
}

/// Runs every cell with the gradient tolerance disabled.
pub fn timing_compare(cfg: &TimingConfig) -> Result<Vec<TimingRow>> {
    if matches!(cfg.task, Task::Gridworld | Task::Rosenbrock) {
        return Err(Error::Config(format!("timing needs a sampled objective, not {}", cfg.task)));
    }
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        for &m in &cfg.memories {
            let mut batches = cfg.batch_sizes.clone();
            if method == Method::TrLbfgs {
                batches = vec![usize::MAX];
            }
            for &b in &batches {
                let mut rc = RunConfig::new(cfg.task, method);
                rc.m = m;
                rc.seed = cfg.seed;
                rc.max_iters = cfg.iters;
                rc.grad_tol = f64::MIN_POSITIVE;
                rc.wall_clock = true;
                rc.lr = (method == Method::Sgd).then_some(cfg.lr);
                let rc = rc.resolve()?;
                let n = rc.samples.unwrap_or(1);
                let mut rc = rc;
                rc.b = (b < n).then_some(b);
                if method == Method::Sgd && rc.b.is_none() {
                    rc.b = Some(n);
                }
                let report = run(&rc)?;
                rows.push(TimingRow {
                    method,
                    b: rc.b.unwrap_or(n),
                    m,
                    iterations: report.records.len(),
                    fevals: report.summary.fevals,
                    gevals: report.summary.gevals,
                    wall_ms: report.summary.wall_ms,
                });
            }
        }
    }
    Ok(rows)
}

/// `method,b,m,iterations,fevals,gevals,wall_ms`.
pub fn timing_csv(rows: &[TimingRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
