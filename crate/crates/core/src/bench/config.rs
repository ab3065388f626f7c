use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Environment variable that overrides the configured data directory.
pub const DATA_DIR_ENV: &str = "QNOPT_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Quadratic,
    Rosenbrock,
    Logistic,
    Mnist,
    Gridworld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LsLbfgs,
    TrLbfgs,
    Sgd,
}

macro_rules! kebab_enum {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $(Self::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

kebab_enum!(Task {
    Quadratic => "quadratic",
    Rosenbrock => "rosenbrock",
    Logistic => "logistic",
    Mnist => "mnist",
    Gridworld => "gridworld",
});

kebab_enum!(Method {
    LsLbfgs => "ls-lbfgs",
    TrLbfgs => "tr-lbfgs",
    Sgd => "sgd",
});

/// One benchmark run. Unset optional fields take task-dependent defaults
/// in [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub method: Method,
    /// L-BFGS memory size.
    #[serde(default = "default_memory")]
    pub m: usize,
    /// Batch size; absent means the full objective for the L-BFGS methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    /// SGD learning rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    /// Parameter dimension for the quadratic, Rosenbrock and logistic tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Training examples for the sampled tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Hidden width of the classification network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    /// Overlap fraction of the multi-batch sampler.
    #[serde(default = "default_overlap")]
    pub overlap: f64,
    /// Directory holding `train-images-idx3-ubyte` and `train-labels-idx1-ubyte`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    /// Gridworld map file; the built-in 5×5 map when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<PathBuf>,
    /// Record wall-clock times; off keeps record files byte-reproducible.
    #[serde(default)]
    pub wall_clock: bool,
}

fn default_memory() -> usize {
    crate::memory::DEFAULT_MEMORY
}

fn default_max_iters() -> usize {
    200
}

fn default_grad_tol() -> f64 {
    1e-5
}

fn default_overlap() -> f64 {
    0.5
}

impl RunConfig {
    pub fn new(task: Task, method: Method) -> Self {
        Self {
            task,
            method,
            m: default_memory(),
            b: None,
            lr: None,
            seed: 0,
            max_iters: default_max_iters(),
            grad_tol: default_grad_tol(),
            dim: None,
            samples: None,
            hidden: None,
            overlap: default_overlap(),
            data_dir: None,
            episodes: None,
            map: None,
            wall_clock: false,
        }
    }

    /// Parses a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configurations always serialize")
    }

    /// Builds a configuration from an optional TOML file, then
    /// [`DATA_DIR_ENV`], then `overrides` (later sources win). Keys are the
    /// kebab-case field names.
    pub fn load(file: Option<&Path>, data_dir_env: Option<String>, overrides: toml::Table) -> Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        if let Some(dir) = data_dir_env.filter(|d| !d.is_empty()) {
            table.insert("data-dir".into(), toml::Value::String(dir));
        }
        table.extend(overrides);
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Fills task-dependent defaults and checks that the method has what it needs.
    pub fn resolve(mut self) -> Result<Self> {
        let bad = |m: String| Err(Error::Config(m));
        match self.task {
            Task::Quadratic => {
                self.dim.get_or_insert(10);
                self.samples.get_or_insert(256);
            }
            Task::Rosenbrock => {
                self.dim.get_or_insert(2);
                self.samples = Some(1);
            }
            Task::Logistic => {
                self.dim.get_or_insert(20);
                self.samples.get_or_insert(1000);
            }
            Task::Mnist => {
                self.samples.get_or_insert(1000);
                self.hidden.get_or_insert(64);
            }
            Task::Gridworld => {
                self.episodes.get_or_insert(crate::rl::QConfig::default().episodes);
                self.b.get_or_insert(crate::rl::QConfig::default().batch);
                if self.method != Method::LsLbfgs {
                    return bad(format!("gridworld supports only ls-lbfgs, not {}", self.method));
                }
            }
        }
        if self.m == 0 {
            return bad("m must be positive".into());
        }
        if !(self.grad_tol > 0.0) {
            return bad(format!("grad-tol must be positive, got {}", self.grad_tol));
        }
        if self.dim == Some(0) || self.samples == Some(0) || self.hidden == Some(0) {
            return bad("dim, samples and hidden must be positive".into());
        }
        if self.task == Task::Rosenbrock && self.dim.is_some_and(|d| d < 2) {
            return bad("rosenbrock needs dim >= 2".into());
        }
        let n = self.samples.unwrap_or(1);
        match self.method {
            Method::Sgd => {
                match self.lr {
                    Some(lr) if lr >= 0.0 && lr.is_finite() => {}
                    Some(lr) => return bad(format!("lr must be a non-negative number, got {lr}")),
                    None => return bad("sgd needs lr".into()),
                }
                let b = *self.b.get_or_insert(32.min(n));
                if b == 0 || b > n {
                    return bad(format!("b = {b} must lie in 1..={n}"));
                }
            }
            Method::TrLbfgs => {
                if let Some(b) = self.b.filter(|&b| b < n) {
                    return bad(format!("tr-lbfgs runs on the full objective; b = {b} < {n} samples"));
                }
            }
            Method::LsLbfgs if self.task != Task::Gridworld => {
                if let Some(b) = self.b.filter(|&b| b < n) {
                    if b < 2 {
                        return bad(format!("multi-batch b = {b} must be at least 2"));
                    }
                    if !(self.overlap > 0.0 && self.overlap <= 0.5) {
                        return bad(format!("overlap {} must lie in (0, 0.5]", self.overlap));
                    }
                }
            }
            Method::LsLbfgs => {}
        }
        Ok(self)
    }

    /// Whether the L-BFGS line-search run uses the multi-batch driver.
    pub fn is_multibatch(&self) -> bool {
        self.method == Method::LsLbfgs
            && self.task != Task::Gridworld
            && self.b.is_some_and(|b| b < self.samples.unwrap_or(1))
    }
}
