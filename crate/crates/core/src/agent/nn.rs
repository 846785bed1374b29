//! Dense feed-forward network: ReLU on hidden layers, linear output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.b[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub layers: Vec<Layer>,
}

/// Per-sample activations kept for backpropagation: `acts[0]` is the input,
/// `acts[k]` the post-activation output of layer `k - 1`.
pub struct Trace {
    pub acts: Vec<Vec<f64>>,
}

impl QNetwork {
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::Architecture(format!("invalid layer widths {widths:?}")));
        }
        Ok(QNetwork {
            layers: widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            for w in &mut layer.w {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].n_in];
        w.extend(self.layers.iter().map(|l| l.n_out));
        w
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().expect("at least one layer").n_out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_inputs() {
            return Err(Error::Dimension {
                expected: self.n_inputs(),
                got: x.len(),
            });
        }
        Ok(self.trace(x).acts.pop().expect("output layer"))
    }

    /// Forward pass recording every layer's output. Panics on a length
    /// mismatch; use [`forward`](Self::forward) for checked input.
    pub fn trace(&self, x: &[f64]) -> Trace {
        assert_eq!(x.len(), self.n_inputs(), "input width");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.n_out);
            layer.apply(&acts[k], &mut out);
            if k < last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
        }
        Trace { acts }
    }

    /// Accumulate into `grad` (same layout as the network) the gradient of
    /// `sum_i dout[i] * output[i]` for the traced sample.
    pub fn backward(&self, trace: &Trace, dout: &[f64], grad: &mut QNetwork) {
        let mut delta = dout.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &trace.acts[k];
            let g = &mut grad.layers[k];
            for o in 0..layer.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                g.b[o] += d;
                let row = &mut g.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if k == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.n_in];
            for o in 0..layer.n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // ReLU derivative from the stored post-activation.
            for (p, a) in prev.iter_mut().zip(&trace.acts[k]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn same_shape(&self, other: &QNetwork) -> bool {
        self.widths() == other.widths()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
