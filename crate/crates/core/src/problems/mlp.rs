use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{check_args, DataError, Dataset, Evaluation, Objective};
use crate::linalg::{axpy, dot};
use crate::Result;

/// Samples per parallel work unit; partial sums are reduced in chunk order.
const CHUNK: usize = 32;

/// Fully connected network: ReLU on hidden layers, identity on the output.
///
/// Parameters are laid out layer by layer as `W` (`out × in`, row-major)
/// followed by `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    widths: Vec<usize>,
    offsets: Vec<usize>,
}

impl MlpSpec {
    /// `widths = [input, hidden…, output]`, at least two entries, all positive.
    pub fn new(widths: &[usize]) -> Result<Self, DataError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(DataError::ShapeMismatch(format!(
                "layer widths {widths:?} must have at least two positive entries"
            )));
        }
        let mut offsets = vec![0];
        for pair in widths.windows(2) {
            let last = *offsets.last().unwrap();
            offsets.push(last + (pair[0] + 1) * pair[1]);
        }
        Ok(Self {
            widths: widths.to_vec(),
            offsets,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// `Σ (in + 1)·out`.
    pub fn param_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// He-normal weights, zero biases.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = vec![0.0; self.param_count()];
        for l in 0..self.num_layers() {
            let (fan_in, out) = (self.widths[l], self.widths[l + 1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let start = self.offsets[l];
            for v in &mut w[start..start + fan_in * out] {
                *v = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        w
    }

    fn layer<'a>(&self, w: &'a [f64], l: usize) -> (&'a [f64], &'a [f64]) {
        let (fan_in, out) = (self.widths[l], self.widths[l + 1]);
        let start = self.offsets[l];
        w[start..start + (fan_in + 1) * out].split_at(fan_in * out)
    }

    fn scratch(&self) -> Vec<Vec<f64>> {
        self.widths[1..].iter().map(|&k| vec![0.0; k]).collect()
    }

    /// Fills `acts[l]` with the output of layer `l`; the last entry holds the
    /// raw network output.
    fn forward_into(&self, w: &[f64], x: &[f64], acts: &mut [Vec<f64>]) {
        let layers = self.num_layers();
        for l in 0..layers {
            let (done, rest) = acts.split_at_mut(l);
            let input = if l == 0 { x } else { &done[l - 1] };
            let (weights, bias) = self.layer(w, l);
            let fan_in = self.widths[l];
            for (o, out) in rest[0].iter_mut().enumerate() {
                let z = bias[o] + dot(&weights[o * fan_in..(o + 1) * fan_in], input);
                *out = if l + 1 < layers { z.max(0.0) } else { z };
            }
        }
    }

    /// Network output for one input.
    pub fn forward(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let mut acts = self.scratch();
        self.forward_into(w, x, &mut acts);
        acts.pop().unwrap()
    }

    /// Adds `∂(doutᵀ f(x; w))/∂w` to `grad`, given the activations of a
    /// preceding `forward_into` call.
    fn backward(&self, w: &[f64], x: &[f64], acts: &[Vec<f64>], dout: &[f64], grad: &mut [f64]) {
        let mut delta = dout.to_vec();
        for l in (0..self.num_layers()).rev() {
            let input = if l == 0 { x } else { &acts[l - 1] };
            let fan_in = self.widths[l];
            let start = self.offsets[l];
            let (gw, gb) = grad[start..start + (fan_in + 1) * delta.len()].split_at_mut(fan_in * delta.len());
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(&mut gw[o * fan_in..(o + 1) * fan_in], d, input);
                    gb[o] += d;
                }
            }
            if l > 0 {
                let (weights, _) = self.layer(w, l);
                let mut prev = vec![0.0; fan_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        axpy(&mut prev, d, &weights[o * fan_in..(o + 1) * fan_in]);
                    }
                }
                for (p, &a) in prev.iter_mut().zip(&acts[l - 1]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }

    /// Sum over `items` of `ℓ(f(xᵢ))` and its parameter gradient, where
    /// `loss_grad(i, output)` returns `(ℓ, ∂ℓ/∂output)`.
    ///
    /// Chunks run in parallel; partial sums are added in chunk order so the
    /// result does not depend on the thread count.
    pub(crate) fn accumulate<F>(&self, w: &[f64], items: &[usize], input: impl Fn(usize) -> Vec<f64> + Sync, loss_grad: F) -> (f64, Vec<f64>)
    where
        F: Fn(usize, &[f64]) -> (f64, Vec<f64>) + Sync,
    {
        let n = self.param_count();
        let partials: Vec<(f64, Vec<f64>)> = items
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acts = self.scratch();
                let mut grad = vec![0.0; n];
                let mut loss = 0.0;
                for &i in chunk {
                    let x = input(i);
                    self.forward_into(w, &x, &mut acts);
                    let (l, dout) = loss_grad(i, acts.last().unwrap());
                    loss += l;
                    self.backward(w, &x, &acts, &dout, &mut grad);
                }
                (loss, grad)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; n];
        for (l, g) in partials {
            loss += l;
            axpy(&mut grad, 1.0, &g);
        }
        (loss, grad)
    }
}

/// Softmax with the max subtracted before exponentiation.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// `log softmax(z)` via log-sum-exp.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// `−log p[label]` with `p` clamped below at `1e-12`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64, DataError> {
    let sum: f64 = probs.iter().sum();
    if label >= probs.len() || (sum - 1.0).abs() > 1e-9 || probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(DataError::BadSimplex { sum });
    }
    Ok(-probs[label].max(1e-12).ln())
}

/// Softmax classifier over a dataset with mean cross-entropy loss.
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    data: Dataset,
}

impl Mlp {
    pub fn new(spec: MlpSpec, data: Dataset) -> Result<Self, DataError> {
        if spec.input_dim() != data.dim() {
            return Err(DataError::ShapeMismatch(format!(
                "network input width {} but samples have {} features",
                spec.input_dim(),
                data.dim()
            )));
        }
        if spec.output_dim() < data.num_classes() {
            return Err(DataError::ShapeMismatch(format!(
                "network has {} outputs but data has {} classes",
                spec.output_dim(),
                data.num_classes()
            )));
        }
        Ok(Self { spec, data })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn predict(&self, w: &[f64], x: &[f64]) -> usize {
        argmax(&self.spec.forward(w, x))
    }

    /// Fraction of `data` classified correctly.
    pub fn accuracy_on(&self, w: &[f64], data: &Dataset) -> f64 {
        let hits: usize = (0..data.len())
            .into_par_iter()
            .filter(|&i| self.predict(w, data.sample(i)) == data.label(i))
            .count();
        hits as f64 / data.len() as f64
    }

    pub fn accuracy(&self, w: &[f64]) -> f64 {
        self.accuracy_on(w, &self.data)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Objective for Mlp {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn num_samples(&self) -> usize {
        self.data.len()
    }

    fn eval_batch(&self, w: &[f64], batch: &[usize]) -> Result<Evaluation> {
        check_args(self.dim(), self.num_samples(), w, batch)?;
        let (loss, mut grad) = self.spec.accumulate(
            w,
            batch,
            |i| self.data.sample(i).to_vec(),
            |i, logits| {
                let logp = log_softmax(logits);
                let label = self.data.label(i);
                let mut dout: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
                dout[label] -= 1.0;
                (-logp[label], dout)
            },
        );
        let inv = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok(Evaluation {
            loss: loss * inv,
            grad,
        })
    }
}
