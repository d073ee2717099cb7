//! Tiny multilayer perceptron used as the Q action-value approximator.
//!
//! Input is a one-hot encoding of the environment state, hidden layers use a
//! saturated ReLU (`min(max(z, 0), ceiling)`), the output layer is linear with
//! one neuron per action. Training is plain full-batch gradient descent on
//! the mean squared error at the taken action.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::EnvState;

/// Hidden layer widths, input side first.
pub const HIDDEN_LAYERS: [usize; 3] = [3, 5, 7];

/// Upper clamp of the saturated ReLU.
pub const SATURATION: f64 = 1.0;

pub fn sat_relu(z: f64, ceiling: f64) -> f64 {
    z.clamp(0.0, ceiling)
}

pub fn sat_relu_grad(z: f64, ceiling: f64) -> f64 {
    if z > 0.0 && z < ceiling {
        1.0
    } else {
        0.0
    }
}

/// One-hot state encoding.
pub fn encode_state(state: EnvState) -> [f64; 2] {
    match state {
        EnvState::S0 => [1.0, 0.0],
        EnvState::S1 => [0.0, 1.0],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.biases.iter().enumerate().map(|(o, &b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// `(x, a) -> target` training tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub state: EnvState,
    pub next_state: EnvState,
    pub action: usize,
    pub target_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub layers: Vec<Layer>,
    pub saturation: f64,
}

/// Per-sample activations kept for backpropagation.
struct Trace {
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
    /// Inputs of every layer, plus the network output last.
    acts: Vec<Vec<f64>>,
}

impl QNetwork {
    /// All-zero network with the given layer sizes (input first).
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output layers");
        let layers = layer_sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self { layers, saturation: SATURATION }
    }

    /// `2 -> 3 -> 5 -> 7 -> actions`.
    pub fn standard_sizes(actions: usize) -> Vec<usize> {
        let mut sizes = vec![2];
        sizes.extend(HIDDEN_LAYERS);
        sizes.push(actions);
        sizes
    }

    /// Weights and biases drawn uniformly from `[low, high)`.
    pub fn random_uniform<R: Rng + ?Sized>(layer_sizes: &[usize], low: f64, high: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(layer_sizes);
        for layer in &mut net.layers {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.gen_range(low..high);
            }
        }
        net
    }

    /// Weights drawn uniformly from `[low, high)`, biases zero.
    pub fn random_weights<R: Rng + ?Sized>(layer_sizes: &[usize], low: f64, high: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(layer_sizes);
        for layer in &mut net.layers {
            for w in &mut layer.weights {
                *w = rng.gen_range(low..high);
            }
        }
        net
    }

    /// The Q-network used by the agents: standard sizes, weights uniform on
    /// [0, 1] and zero biases. Random positive biases on top of positive
    /// weights would push the deeper hidden units past the saturation
    /// ceiling for both states, leaving the output blind to the input.
    pub fn for_actions<R: Rng + ?Sized>(actions: usize, rng: &mut R) -> Self {
        Self::random_weights(&Self::standard_sizes(actions), 0.0, 1.0, rng)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Layer-major flat parameter vector: each layer's weights (row-major)
    /// followed by its biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(l.biases.len());
            l.biases.copy_from_slice(b);
            rest = tail;
        }
    }

    pub fn params_json(&self) -> String {
        serde_json::to_string(&self.params()).expect("floats serialize")
    }

    pub fn load_params_json(&mut self, text: &str) -> crate::error::Result<()> {
        let params: Vec<f64> = serde_json::from_str(text)?;
        if params.len() != self.param_count() {
            return Err(crate::error::Error::Config(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        self.set_params(&params);
        Ok(())
    }

    pub fn forward_input(&self, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&x, &mut z);
            if i < last {
                for v in &mut z {
                    *v = sat_relu(*v, self.saturation);
                }
            }
            std::mem::swap(&mut x, &mut z);
        }
        x
    }

    /// Q-values of every action in `state`.
    pub fn forward(&self, state: EnvState) -> Vec<f64> {
        self.forward_input(&encode_state(state))
    }

    fn forward_trace(&self, input: &[f64]) -> Trace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(acts.last().expect("input pushed"), &mut z);
            let a = if i < last { z.iter().map(|&v| sat_relu(v, self.saturation)).collect() } else { z.clone() };
            pre.push(z);
            acts.push(a);
        }
        Trace { pre, acts }
    }

    /// Mean squared error of the taken-action outputs against their targets.
    pub fn loss(&self, batch: &[TrainingSample]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let total: f64 = batch
            .iter()
            .map(|s| {
                let e = self.forward(s.state)[s.action] - s.target_q;
                e * e
            })
            .sum();
        total / batch.len() as f64
    }

    /// Loss and its gradient with respect to `params()` (same layout).
    pub fn loss_and_gradient(&self, batch: &[TrainingSample]) -> (f64, Vec<f64>) {
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        let mut loss = 0.0;
        if batch.is_empty() {
            return (0.0, vec![0.0; self.param_count()]);
        }
        let scale = 1.0 / batch.len() as f64;
        for sample in batch {
            let trace = self.forward_trace(&encode_state(sample.state));
            let out = trace.acts.last().expect("output");
            let err = out[sample.action] - sample.target_q;
            loss += err * err * scale;

            // dL/dz for the output layer: only the taken action contributes.
            let mut delta = vec![0.0; self.outputs()];
            delta[sample.action] = 2.0 * err * scale;
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &trace.acts[li];
                let g = &mut grads[li];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, &x) in row.iter_mut().zip(input) {
                        *gw += d * x;
                    }
                }
                if li == 0 {
                    break;
                }
                let below = &trace.pre[li - 1];
                let mut next = vec![0.0; layer.inputs];
                for (i, slot) in next.iter_mut().enumerate() {
                    let back: f64 =
                        delta.iter().enumerate().map(|(o, &d)| d * layer.weights[o * layer.inputs + i]).sum();
                    *slot = back * sat_relu_grad(below[i], self.saturation);
                }
                delta = next;
            }
        }
        let flat = grads.iter().flat_map(|g| g.weights.iter().chain(g.biases.iter()).copied()).collect();
        (loss, flat)
    }

    /// One gradient-descent step on `batch`. Returns the loss before the step.
    pub fn train_minibatch(&mut self, batch: &[TrainingSample], lr: f64) -> f64 {
        let (loss, grad) = self.loss_and_gradient(batch);
        let mut k = 0;
        for layer in &mut self.layers {
            for p in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *p -= lr * grad[k];
                k += 1;
            }
        }
        loss
    }
}

/// Largest relative disagreement between the backpropagated gradient and
/// central finite differences of the loss, over every parameter.
///
/// Relative error is `|a - n| / max(|a|, |n|)`; pairs where both are below
/// `1e-7` in magnitude count as agreeing.
pub fn gradient_check(net: &QNetwork, batch: &[TrainingSample], epsilon: f64) -> f64 {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let (_, analytic) = net.loss_and_gradient(batch);
    let base = net.params();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] = base[k] + epsilon;
        probe.set_params(&p);
        let up = probe.loss(batch);
        p[k] = base[k] - epsilon;
        probe.set_params(&p);
        let down = probe.loss(batch);
        let numeric = (up - down) / (2.0 * epsilon);
        let scale = analytic[k].abs().max(numeric.abs());
        if scale < 1e-7 {
            continue;
        }
        worst = worst.max((analytic[k] - numeric).abs() / scale);
    }
    worst
}
