//! Per-iteration telemetry shared by every driver.

use serde::{Deserialize, Serialize};

/// One row of a run's CSV trace.
///
/// `step_param` is the step length for line-search and SGD runs and the
/// trust-region radius used for the step for trust-region runs. `fevals`
/// and `gevals` are cumulative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub step_param: f64,
    pub rho: Option<f64>,
    pub accepted: bool,
    pub fevals: usize,
    pub gevals: usize,
    pub wall_ms: f64,
}

/// Exact CSV header emitted for record files.
pub const CSV_HEADER: &str = "iter,loss,grad_norm,step_param,rho,accepted,fevals,gevals,wall_ms";

/// Running loss/gradient evaluation counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub fevals: usize,
    pub gevals: usize,
}

impl Counters {
    /// One combined loss-and-gradient evaluation.
    pub fn tick(&mut self) {
        self.fevals += 1;
        self.gevals += 1;
    }
}

/// Final state of a driver run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub w: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub loss: f64,
    pub grad_norm: f64,
    /// Whether the gradient tolerance was met.
    pub converged: bool,
    pub counters: Counters,
}

impl RunOutcome {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}
