use crate::problems::{DataError, Evaluation, MlpSpec, Objective};
use crate::{Error, Result};

use super::gridworld::{Action, QTable};
use super::Experience;

/// Differentiable action-value model `Q(s, ·; w)` over integer states.
pub trait ActionValue: Sync {
    fn num_params(&self) -> usize;

    /// `Q(s, a; w)` for every action.
    fn values(&self, w: &[f64], state: usize) -> Vec<f64>;

    /// `Σᵢ ½(Q(sᵢ, aᵢ; w) − 𝒴ᵢ)²` and its gradient with the targets held fixed.
    fn residual_sum(&self, w: &[f64], batch: &[Experience], targets: &[f64]) -> (f64, Vec<f64>);
}

/// One-hot cell encoding followed by a ReLU MLP `cells → hidden → 4`.
#[derive(Debug, Clone)]
pub struct QNetwork {
    spec: MlpSpec,
    cells: usize,
}

impl QNetwork {
    pub fn new(cells: usize, hidden: usize) -> Result<Self, DataError> {
        Ok(Self {
            spec: MlpSpec::new(&[cells, hidden, Action::COUNT])?,
            cells,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn num_cells(&self) -> usize {
        self.cells
    }

    fn one_hot(&self, state: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.cells];
        x[state] = 1.0;
        x
    }
}

impl ActionValue for QNetwork {
    fn num_params(&self) -> usize {
        self.spec.param_count()
    }

    fn values(&self, w: &[f64], state: usize) -> Vec<f64> {
        self.spec.forward(w, &self.one_hot(state))
    }

    fn residual_sum(&self, w: &[f64], batch: &[Experience], targets: &[f64]) -> (f64, Vec<f64>) {
        let items: Vec<usize> = (0..batch.len()).collect();
        self.spec.accumulate(
            w,
            &items,
            |i| self.one_hot(batch[i].s),
            |i, out| {
                let a = batch[i].a;
                let r = out[a] - targets[i];
                let mut dout = vec![0.0; out.len()];
                dout[a] = r;
                (0.5 * r * r, dout)
            },
        )
    }
}

/// `𝒴ᵢ = rᵢ` for terminal transitions, `rᵢ + γ·maxₐ′ Q(s′ᵢ, a′; w_lagged)` otherwise.
pub fn td_targets<Q: ActionValue + ?Sized>(
    batch: &[Experience],
    model: &Q,
    w_lagged: &[f64],
    discount: f64,
) -> Vec<f64> {
    batch
        .iter()
        .map(|e| {
            if e.terminal || discount == 0.0 {
                e.r
            } else {
                let best = model.values(w_lagged, e.s_next).into_iter().fold(f64::NEG_INFINITY, f64::max);
                e.r + discount * best
            }
        })
        .collect()
}

/// Mean Bellman risk `(1/2|D|) Σ (𝒴 − Q(s, a; w))²` and its semi-gradient
/// `(−1/|D|) Σ (𝒴 − Q)∇Q`.
pub fn bellman_risk_grad<Q: ActionValue + ?Sized>(
    model: &Q,
    batch: &[Experience],
    w: &[f64],
    targets: &[f64],
) -> Result<Evaluation> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if w.len() != model.num_params() {
        return Err(Error::DimensionMismatch {
            expected: model.num_params(),
            got: w.len(),
        });
    }
    if targets.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len(),
            got: targets.len(),
        });
    }
    let (loss, mut grad) = model.residual_sum(w, batch, targets);
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|v| *v *= scale);
    Ok(Evaluation {
        loss: loss * scale,
        grad,
    })
}

/// Experiences with frozen targets, viewed as an empirical risk over its entries.
#[derive(Debug, Clone)]
pub struct BellmanBatch<'a, Q: ?Sized> {
    model: &'a Q,
    batch: &'a [Experience],
    targets: Vec<f64>,
}

impl<'a, Q: ActionValue + ?Sized> BellmanBatch<'a, Q> {
    pub fn new(model: &'a Q, batch: &'a [Experience], targets: Vec<f64>) -> Result<Self> {
        if targets.len() != batch.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.len(),
                got: targets.len(),
            });
        }
        Ok(Self { model, batch, targets })
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

impl<Q: ActionValue + ?Sized> Objective for BellmanBatch<'_, Q> {
    fn dim(&self) -> usize {
        self.model.num_params()
    }

    fn num_samples(&self) -> usize {
        self.batch.len()
    }

    fn eval_batch(&self, w: &[f64], batch: &[usize]) -> Result<Evaluation> {
        crate::problems::check_args(self.dim(), self.batch.len(), w, batch)?;
        let sub: Vec<Experience> = batch.iter().map(|&i| self.batch[i]).collect();
        let targets: Vec<f64> = batch.iter().map(|&i| self.targets[i]).collect();
        bellman_risk_grad(self.model, &sub, w, &targets)
    }

    fn eval(&self, w: &[f64]) -> Result<Evaluation> {
        bellman_risk_grad(self.model, self.batch, w, &self.targets)
    }
}

/// Q-network parameters `w_k` plus the lagged snapshot `w_{k−1}` used for targets.
#[derive(Debug, Clone)]
pub struct QFunction {
    net: QNetwork,
    w: Vec<f64>,
    lagged: Vec<f64>,
}

impl QFunction {
    /// He-initialized network; the snapshot starts equal to `w₀`.
    pub fn new(cells: usize, hidden: usize, seed: u64) -> Result<Self, DataError> {
        let net = QNetwork::new(cells, hidden)?;
        let w = net.spec.init_params(seed);
        Ok(Self {
            lagged: w.clone(),
            w,
            net,
        })
    }

    /// Network that reproduces `table` exactly: the first `cells` hidden
    /// units copy the one-hot input and the output layer holds the table.
    /// Requires `hidden ≥ cells`.
    pub fn from_table(table: &QTable, hidden: usize) -> Result<Self, DataError> {
        let cells = table.len();
        if hidden < cells {
            return Err(DataError::ShapeMismatch(format!(
                "{hidden} hidden units cannot encode {cells} cells"
            )));
        }
        let net = QNetwork::new(cells, hidden)?;
        let mut w = vec![0.0; net.num_params()];
        for c in 0..cells {
            w[c * cells + c] = 1.0;
        }
        let out_start = (cells + 1) * hidden;
        for (a, row) in w[out_start..out_start + Action::COUNT * hidden].chunks_mut(hidden).enumerate() {
            for c in 0..cells {
                row[c] = table[c][a];
            }
        }
        Ok(Self {
            lagged: w.clone(),
            w,
            net,
        })
    }

    pub fn network(&self) -> &QNetwork {
        &self.net
    }

    pub fn params(&self) -> &[f64] {
        &self.w
    }

    pub fn lagged_params(&self) -> &[f64] {
        &self.lagged
    }

    pub fn values(&self, state: usize) -> Vec<f64> {
        self.net.values(&self.w, state)
    }

    pub fn lagged_values(&self, state: usize) -> Vec<f64> {
        self.net.values(&self.lagged, state)
    }

    /// Greedy action, ties to the lowest index.
    pub fn greedy(&self, state: usize) -> usize {
        argmax(&self.values(state))
    }

    /// Moves the snapshot to the current parameters and installs `w_next`.
    pub fn advance(&mut self, w_next: Vec<f64>) {
        self.lagged = std::mem::replace(&mut self.w, w_next);
    }

    pub fn td_targets(&self, batch: &[Experience], discount: f64) -> Vec<f64> {
        td_targets(batch, &self.net, &self.lagged, discount)
    }
}

/// First index of the maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `max |Q(s, a; w) − Q*(s, a)|` over the given states and all actions.
pub fn value_gap(q: &QFunction, oracle: &QTable, states: &[usize]) -> f64 {
    states
        .iter()
        .flat_map(|&s| q.values(s).into_iter().zip(oracle[s]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}
