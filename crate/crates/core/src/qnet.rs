//! Small fully connected Q-network in double precision with hand-written
//! backpropagation and plain SGD.
//!
//! Weights are stored input-major (`weights[i * outputs + j]` connects input
//! `i` to output `j`) so the forward pass is a sequence of contiguous axpy
//! updates.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, ConfigError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub input_size: usize,
    pub hidden: Vec<usize>,
    pub output_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_size: 3,
            hidden: vec![64, 64],
            output_size: 25,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.input_size == 0 || self.output_size == 0 || self.hidden.contains(&0) {
            return Err(ConfigError::Invalid("network layer sizes must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.input_size);
        sizes.extend(&self.hidden);
        sizes.push(self.output_size);
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    fn affine_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (xi, row) in x.iter().zip(self.weights.chunks_exact(self.outputs)) {
            if *xi != 0.0 {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += xi * w;
                }
            }
        }
    }
}

/// Parameters of the network; the same shape doubles as a gradient buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub layers: Vec<Layer>,
}

impl NetParams {
    /// He-normal weights (variance `2 / fan_in`), zero biases.
    pub fn init(cfg: &NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = cfg.layer_sizes();
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
                let mut layer = Layer::zeros(fan_in, fan_out);
                layer.weights.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn fill(&mut self, value: f64) {
        self.iter_mut().for_each(|v| *v = value);
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn shape_matches(&self, other: &NetParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut trace = Trace::new(self);
        self.forward_trace(input, &mut trace);
        trace.output().to_vec()
    }

    /// Runs the network and keeps every layer's activations in `trace`.
    pub fn forward_trace(&self, input: &[f64], trace: &mut Trace) {
        assert_eq!(input.len(), self.input_size(), "input width mismatch");
        assert!(input.iter().all(|v| v.is_finite()), "non-finite network input");
        trace.acts[0].copy_from_slice(input);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = trace.acts.split_at_mut(l + 1);
            let out = &mut tail[0];
            layer.affine_into(&head[l], out);
            if l < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
    }

    pub fn save(&self, cfg: &NetConfig, path: &Path) -> Result<(), CheckpointError> {
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: cfg.clone(),
            params: self.clone(),
        };
        let text = serde_json::to_string(&ckpt)?;
        std::fs::write(path, text).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<(NetConfig, NetParams), CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: ckpt.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let expected = NetParams::init(&ckpt.config, 0);
        if !expected.shape_matches(&ckpt.params)
            || ckpt
                .params
                .layers
                .iter()
                .any(|l| l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs)
        {
            return Err(CheckpointError::Shape("layer sizes disagree with config".into()));
        }
        Ok((ckpt.config, ckpt.params))
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: NetConfig,
    params: NetParams,
}

/// Per-layer activation buffers for one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn new(params: &NetParams) -> Self {
        let mut acts = vec![vec![0.0; params.input_size()]];
        acts.extend(params.layers.iter().map(|l| vec![0.0; l.outputs]));
        Self { acts }
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty trace")
    }
}

/// One regression sample: Q(input, action) should move toward `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub input: &'a [f64],
    pub action: usize,
    pub target: f64,
}

/// Reusable scratch space for gradient computation.
#[derive(Debug, Clone)]
pub struct GradWorkspace {
    trace: Trace,
    delta: Vec<Vec<f64>>,
    pub grads: NetParams,
}

impl GradWorkspace {
    pub fn new(params: &NetParams) -> Self {
        Self {
            trace: Trace::new(params),
            delta: params.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            grads: params.zeros_like(),
        }
    }
}

/// Gradient of `mean((Q(s, a) - y)^2)` over the batch; only the taken
/// action's output carries error. Leaves the gradient in `ws.grads` and
/// returns the loss.
pub fn grad_into(params: &NetParams, batch: &[Sample<'_>], ws: &mut GradWorkspace) -> f64 {
    assert!(!batch.is_empty(), "empty batch");
    ws.grads.fill(0.0);
    let scale = 1.0 / batch.len() as f64;
    let last = params.layers.len() - 1;
    let mut loss = 0.0;
    for sample in batch {
        params.forward_trace(sample.input, &mut ws.trace);
        let err = ws.trace.output()[sample.action] - sample.target;
        loss += err * err;

        let out_delta = &mut ws.delta[last];
        out_delta.fill(0.0);
        out_delta[sample.action] = 2.0 * err * scale;

        for l in (0..=last).rev() {
            let layer = &params.layers[l];
            let g = &mut ws.grads.layers[l];
            let input = &ws.trace.acts[l];
            let (lower, upper) = ws.delta.split_at_mut(l);
            let delta = &upper[0];
            for (gb, d) in g.bias.iter_mut().zip(delta) {
                *gb += d;
            }
            for (xi, grow) in input.iter().zip(g.weights.chunks_exact_mut(layer.outputs)) {
                if *xi != 0.0 {
                    for (gw, d) in grow.iter_mut().zip(delta) {
                        *gw += xi * d;
                    }
                }
            }
            if l > 0 {
                let prev = &mut lower[l - 1];
                for ((p, xi), wrow) in prev
                    .iter_mut()
                    .zip(input)
                    .zip(layer.weights.chunks_exact(layer.outputs))
                {
                    // rectifier: gradient passes only where the unit was active
                    *p = if *xi > 0.0 { dot(wrow, delta) } else { 0.0 };
                }
            }
        }
    }
    loss * scale
}

/// Allocating convenience wrapper around [`grad_into`].
pub fn grad(params: &NetParams, batch: &[Sample<'_>]) -> (NetParams, f64) {
    let mut ws = GradWorkspace::new(params);
    let loss = grad_into(params, batch, &mut ws);
    (ws.grads, loss)
}

/// Mean squared TD loss without gradients.
pub fn loss(params: &NetParams, batch: &[Sample<'_>]) -> f64 {
    let mut trace = Trace::new(params);
    let sum: f64 = batch
        .iter()
        .map(|s| {
            params.forward_trace(s.input, &mut trace);
            let e = trace.output()[s.action] - s.target;
            e * e
        })
        .sum();
    sum / batch.len() as f64
}

/// `theta <- theta - lr * grad`, elementwise.
pub fn sgd_update(params: &mut NetParams, grads: &NetParams, learning_rate: f64) {
    assert!(params.shape_matches(grads), "gradient shape mismatch");
    for (p, g) in params.iter_mut().zip(grads.iter()) {
        *p -= learning_rate * g;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
