//! Dense ReLU network with hand-written backpropagation.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Layer widths of the power-control network: 3 observations in, one
/// Q-value per action out.
pub const DEFAULT_LAYOUT: [usize; 4] = [3, 140, 70, 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.weights[j * self.inputs..(j + 1) * self.inputs];
            *o = self.biases[j] + dot(row, x);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorise.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[c * 4 + k] * b[c * 4 + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Feed-forward Q-network: ReLU after every hidden layer, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

impl QNetwork {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new(layout: &[usize], rng: &mut SimRng) -> Self {
        assert!(layout.len() >= 2, "need at least an input and an output layer");
        let layers = layout
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut l = Dense::zeros(w[0], w[1]);
                for v in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                    *v = rng.gen_range(-bound..=bound);
                }
                l
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(layout: &[usize]) -> Self {
        Self {
            layers: layout.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layout(&self) -> Vec<usize> {
        let mut v = vec![self.layers[0].inputs];
        v.extend(self.layers.iter().map(|l| l.outputs));
        v
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Multiply-accumulate FLOPs of one forward pass (2 per weight).
    pub fn flop_count(&self) -> usize {
        self.layers.iter().map(|l| 2 * l.inputs * l.outputs).sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters in checkpoint order: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.biases);
        }
        v
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::contract(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn same_architecture(&self, other: &QNetwork) -> bool {
        self.layout() == other.layout()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::contract(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("non-finite network input"));
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; l.outputs];
            l.forward_into(&cur, &mut out);
            if k != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = out;
        }
        cur
    }

    /// Forward pass keeping every layer's post-activation output.
    fn forward_trace(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.clear();
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; l.outputs];
            l.forward_into(&acts[k], &mut out);
            if k != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
    }

    /// Mean squared TD error over `samples` of `(input, action, target)` and
    /// its gradient. Only the chosen action's output receives gradient.
    pub fn loss_and_gradient(&self, samples: &[(&[f64], usize, f64)]) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(self);
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let n = samples.len() as f64;
        let mut loss = 0.0;
        for &(x, action, target) in samples {
            self.forward_trace(x, &mut acts);
            let q = acts[self.layers.len()][action];
            let err = q - target;
            loss += err * err;
            // d(loss)/dq for this sample.
            let mut delta = vec![0.0; self.output_dim()];
            delta[action] = 2.0 * err / n;
            for k in (0..self.layers.len()).rev() {
                let l = &self.layers[k];
                let input = &acts[k];
                let g = &mut grads.layers[k];
                for (j, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        g.biases[j] += d;
                        axpy(d, input, &mut g.weights[j * l.inputs..(j + 1) * l.inputs]);
                    }
                }
                if k == 0 {
                    break;
                }
                let mut prev = vec![0.0; l.inputs];
                for (j, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        axpy(d, &l.weights[j * l.inputs..(j + 1) * l.inputs], &mut prev);
                    }
                }
                // ReLU derivative, taken as 0 at exactly 0.
                for (p, &a) in prev.iter_mut().zip(input.iter()) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        (loss / n, grads)
    }

    /// Text checkpoint. Layout line, then for each layer a `w` block of
    /// `outputs` rows of `inputs` values followed by a `b` row.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let layout: Vec<String> = self.layout().iter().map(|v| v.to_string()).collect();
        writeln!(s, "qnetwork v1 {}", layout.join(" ")).unwrap();
        for (k, l) in self.layers.iter().enumerate() {
            writeln!(s, "w {} {} {}", k, l.outputs, l.inputs).unwrap();
            for row in l.weights.chunks(l.inputs) {
                let r: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(s, "{}", r.join(" ")).unwrap();
            }
            writeln!(s, "b {} {}", k, l.outputs).unwrap();
            let r: Vec<String> = l.biases.iter().map(|v| v.to_string()).collect();
            writeln!(s, "{}", r.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("bad checkpoint: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let mut h = header.split_whitespace();
        if h.next() != Some("qnetwork") || h.next() != Some("v1") {
            return Err(bad("header"));
        }
        let layout: Vec<usize> = h
            .map(|t| t.parse().map_err(|_| bad("layout")))
            .collect::<Result<_>>()?;
        if layout.len() < 2 {
            return Err(bad("layout"));
        }
        let mut net = QNetwork::zeros(&layout);
        let parse_row = |line: Option<&str>, len: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = line
                .ok_or_else(|| bad("truncated"))?
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("number")))
                .collect::<Result<_>>()?;
            if v.len() != len {
                return Err(bad("row length"));
            }
            Ok(v)
        };
        for l in net.layers.iter_mut() {
            lines.next().filter(|t| t.starts_with("w ")).ok_or_else(|| bad("w block"))?;
            for j in 0..l.outputs {
                let row = parse_row(lines.next(), l.inputs)?;
                l.weights[j * l.inputs..(j + 1) * l.inputs].copy_from_slice(&row);
            }
            lines.next().filter(|t| t.starts_with("b ")).ok_or_else(|| bad("b block"))?;
            l.biases = parse_row(lines.next(), l.outputs)?;
        }
        Ok(net)
    }
}

/// Gradient with the same shape as a [`QNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    fn zeros_like(net: &QNetwork) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    /// Flattened in the same order as [`QNetwork::params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.biases);
        }
        v
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Parameter update rule with its running state.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<f64>,
        v: Vec<f64>,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, net: &QNetwork) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                t: 0,
                m: vec![0.0; net.param_count()],
                v: vec![0.0; net.param_count()],
            },
        }
    }

    pub fn apply(&mut self, net: &mut QNetwork, grads: &Gradients) {
        match self {
            Optimizer::Sgd { lr } => {
                for (l, g) in net.layers.iter_mut().zip(&grads.layers) {
                    axpy(-*lr, &g.weights, &mut l.weights);
                    axpy(-*lr, &g.biases, &mut l.biases);
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                t,
                m,
                v,
            } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t as i32);
                let c2 = 1.0 - beta2.powi(*t as i32);
                let mut idx = 0;
                for (l, g) in net.layers.iter_mut().zip(&grads.layers) {
                    for (p, gv) in l
                        .weights
                        .iter_mut()
                        .chain(l.biases.iter_mut())
                        .zip(g.weights.iter().chain(g.biases.iter()))
                    {
                        m[idx] = *beta1 * m[idx] + (1.0 - *beta1) * gv;
                        v[idx] = *beta2 * v[idx] + (1.0 - *beta2) * gv * gv;
                        let mh = m[idx] / c1;
                        let vh = v[idx] / c2;
                        *p -= *lr * mh / (vh.sqrt() + *eps);
                        idx += 1;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    /// Straightforward matrix arithmetic, written independently of `Dense`.
    fn naive_forward(net: &QNetwork, x: &[f64]) -> Vec<f64> {
        let mut h: Vec<f64> = x.to_vec();
        let n = net.layers().len();
        for (k, l) in net.layers().iter().enumerate() {
            let mut out = Vec::new();
            for j in 0..l.outputs {
                let mut s = l.biases[j];
                for i in 0..l.inputs {
                    s += l.weights[j * l.inputs + i] * h[i];
                }
                out.push(if k + 1 < n && s < 0.0 { 0.0 } else { s });
            }
            h = out;
        }
        h
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = QNetwork::zeros(&DEFAULT_LAYOUT);
        assert_eq!(net.forward(&[0.3, 0.9, 0.1]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn bias_only_network_outputs_bias() {
        let mut net = QNetwork::zeros(&DEFAULT_LAYOUT);
        net.layers_mut()[2].biases = vec![0.5, -1.0, 2.0];
        for x in [[0.0, 0.0, 0.0], [1.0, 0.2, 0.7]] {
            assert_eq!(net.forward(&x).unwrap(), vec![0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let net = QNetwork::new(&DEFAULT_LAYOUT, &mut seeded(11));
        for x in [[0.1, 0.5, 0.9], [1.0, 0.0, 0.3], [0.0, 0.0, 0.0]] {
            let got = net.forward(&x).unwrap();
            let want = naive_forward(&net, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let net = QNetwork::zeros(&DEFAULT_LAYOUT);
        assert!(net.forward(&[f64::NAN, 0.0, 0.0]).is_err());
        assert!(net.forward(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn flops_and_params() {
        let net = QNetwork::zeros(&DEFAULT_LAYOUT);
        assert_eq!(net.flop_count(), 20_860);
        assert_eq!(net.param_count(), 3 * 140 + 140 + 140 * 70 + 70 + 70 * 3 + 3);
        assert_eq!(net.output_dim(), 3);
    }

    #[test]
    fn init_within_fan_in_bound() {
        let net = QNetwork::new(&DEFAULT_LAYOUT, &mut seeded(2));
        for l in net.layers() {
            let b = 1.0 / (l.inputs as f64).sqrt();
            assert!(l.weights.iter().chain(l.biases.iter()).all(|v| v.abs() <= b));
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let net = QNetwork::new(&DEFAULT_LAYOUT, &mut seeded(5));
        let back = QNetwork::from_text(&net.to_text()).unwrap();
        assert_eq!(net, back);
        assert!(QNetwork::from_text("qnetwork v1 3 2\nw 0 2 3\n1 2 3\n").is_err());
    }

    #[test]
    fn params_round_trip() {
        let a = QNetwork::new(&[3, 4, 3, 3], &mut seeded(5));
        let mut b = QNetwork::zeros(&[3, 4, 3, 3]);
        b.set_params(&a.params()).unwrap();
        assert_eq!(a, b);
        assert!(b.set_params(&[1.0]).is_err());
    }

    #[test]
    fn zero_error_gives_zero_gradient() {
        let net = QNetwork::new(&[3, 4, 3, 3], &mut seeded(8));
        let x = [0.2, 0.4, 0.6];
        let q = net.forward(&x).unwrap();
        let (loss, g) = net.loss_and_gradient(&[(&x, 1, q[1])]);
        assert_eq!(loss, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }
}
