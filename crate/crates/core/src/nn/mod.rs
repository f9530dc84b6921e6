//! Dense feed-forward regressor: ReLU hidden layers, one linear output unit,
//! mean-squared-error loss and an ADAM optimizer.

mod adam;
mod train;

pub use adam::{adam_step, AdamState};
pub use train::{train, TrainConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::FeatureMatrix;

/// Hidden widths used when none are configured.
pub const DEFAULT_HIDDEN: [usize; 5] = [128, 256, 128, 64, 64];

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("network needs at least one hidden layer")]
    NoHiddenLayers,
    #[error("layer widths must be positive")]
    ZeroWidth,
    #[error("expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter, gradient and optimizer shapes disagree")]
    ShapeMismatch,
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("non-finite value encountered")]
    NonFinite,
}

/// One dense layer. `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(inputs: usize, outputs: usize) -> LayerParams {
        LayerParams {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn weight_row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }
}

/// Layer stack. Hidden layers use ReLU, the last layer is linear with one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub layers: Vec<LayerParams>,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParameters;

impl ModelParameters {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    /// Layer widths from input to output, e.g. `[7, 128, …, 1]`.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn zeros_like(&self) -> ModelParameters {
        ModelParameters {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn same_shape(&self, other: &ModelParameters) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    /// Checks the chaining and single-output invariants.
    pub fn check_shape(&self) -> Result<(), NnError> {
        let Some(last) = self.layers.last() else {
            return Err(NnError::NoHiddenLayers);
        };
        if last.outputs != 1 {
            return Err(NnError::ShapeMismatch);
        }
        for l in &self.layers {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(NnError::ShapeMismatch);
            }
        }
        if self.layers.windows(2).any(|w| w[0].outputs != w[1].inputs) {
            return Err(NnError::ShapeMismatch);
        }
        Ok(())
    }

    /// All parameters as one flat sequence of slices, weights before biases per layer.
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
    }

    pub fn is_finite(&self) -> bool {
        self.slices().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// He-uniform initialization: weights in ±√(6/fan_in), zero biases.
pub fn init_network(
    input_dim: usize,
    hidden: &[usize],
    seed: u64,
) -> Result<ModelParameters, NnError> {
    if hidden.is_empty() {
        return Err(NnError::NoHiddenLayers);
    }
    if input_dim == 0 || hidden.contains(&0) {
        return Err(NnError::ZeroWidth);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden);
    dims.push(1);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            LayerParams {
                inputs: fan_in,
                outputs: fan_out,
                weights: (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..=bound))
                    .collect(),
                biases: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(ModelParameters { layers })
}

#[inline]
pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Subgradient with the convention relu'(0) = 0.
#[inline]
pub fn relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Activations retained from a forward pass. `post[0]` is the input; for each
/// layer `l`, `pre[l]` is its affine output and `post[l + 1]` the activation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardCache {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl ForwardCache {
    fn for_params(p: &ModelParameters) -> ForwardCache {
        ForwardCache {
            pre: p.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            post: p
                .shape()
                .into_iter()
                .map(|n| vec![0.0; n])
                .collect(),
        }
    }

    pub fn prediction(&self) -> f64 {
        self.post.last().map_or(f64::NAN, |v| v[0])
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize the reduction
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
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

fn forward_into(p: &ModelParameters, x: &[f64], cache: &mut ForwardCache) {
    cache.post[0].copy_from_slice(x);
    let last = p.layers.len() - 1;
    for (l, layer) in p.layers.iter().enumerate() {
        let (before, after) = cache.post.split_at_mut(l + 1);
        let input = &before[l];
        let out = &mut after[0];
        let pre = &mut cache.pre[l];
        for o in 0..layer.outputs {
            let z = dot(layer.weight_row(o), input) + layer.biases[o];
            pre[o] = z;
            out[o] = if l == last { z } else { relu(z) };
        }
    }
}

/// Single-example forward pass.
pub fn forward(p: &ModelParameters, x: &[f64]) -> Result<(f64, ForwardCache), NnError> {
    check_input(p, x)?;
    let mut cache = ForwardCache::for_params(p);
    forward_into(p, x, &mut cache);
    Ok((cache.prediction(), cache))
}

fn check_input(p: &ModelParameters, x: &[f64]) -> Result<(), NnError> {
    if x.len() != p.input_dim() {
        return Err(NnError::DimensionMismatch {
            expected: p.input_dim(),
            got: x.len(),
        });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(NnError::NonFinite);
    }
    Ok(())
}

pub fn predict(p: &ModelParameters, x: &[f64]) -> Result<f64, NnError> {
    forward(p, x).map(|(y, _)| y)
}

fn check_batch(p: &ModelParameters, batch: &FeatureMatrix) -> Result<(), NnError> {
    if batch.cols != p.input_dim() {
        return Err(NnError::DimensionMismatch {
            expected: p.input_dim(),
            got: batch.cols,
        });
    }
    Ok(())
}

/// Mean squared error over the batch. An empty batch has zero loss.
pub fn loss_mse(p: &ModelParameters, batch: &FeatureMatrix) -> Result<f64, NnError> {
    check_batch(p, batch)?;
    if batch.rows() == 0 {
        return Ok(0.0);
    }
    let mut cache = ForwardCache::for_params(p);
    let mut sum = 0.0;
    for i in 0..batch.rows() {
        forward_into(p, batch.row(i), &mut cache);
        let e = cache.prediction() - batch.y[i];
        sum += e * e;
    }
    Ok(sum / batch.rows() as f64)
}

/// Reusable buffers for repeated backward passes.
pub(crate) struct Scratch {
    cache: ForwardCache,
    delta: Vec<Vec<f64>>,
}

impl Scratch {
    pub(crate) fn new(p: &ModelParameters) -> Scratch {
        Scratch {
            cache: ForwardCache::for_params(p),
            delta: p.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
        }
    }
}

/// Adds `scale · ∂(pred − y)²/∂θ` for one example into `grads`; returns the squared error.
pub(crate) fn accumulate_example(
    p: &ModelParameters,
    x: &[f64],
    y: f64,
    scale: f64,
    grads: &mut Gradients,
    s: &mut Scratch,
) -> f64 {
    forward_into(p, x, &mut s.cache);
    let err = s.cache.prediction() - y;
    let last = p.layers.len() - 1;
    s.delta[last][0] = 2.0 * err * scale;

    for l in (0..p.layers.len()).rev() {
        let layer = &p.layers[l];
        let input = &s.cache.post[l];
        let (lower, upper) = s.delta.split_at_mut(l);
        let delta = &upper[0];
        let g = &mut grads.layers[l];
        for (o, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                axpy(d, input, &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs]);
                g.biases[o] += d;
            }
        }
        if l > 0 {
            let below = &mut lower[l - 1];
            below.iter_mut().for_each(|v| *v = 0.0);
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, layer.weight_row(o), below);
                }
            }
            for (b, &z) in below.iter_mut().zip(&s.cache.pre[l - 1]) {
                *b *= relu_grad(z);
            }
        }
    }
    err * err
}

/// Analytic gradient of `loss_mse` over the batch.
pub fn backward(p: &ModelParameters, batch: &FeatureMatrix) -> Result<Gradients, NnError> {
    check_batch(p, batch)?;
    let mut grads = p.zeros_like();
    if batch.rows() == 0 {
        return Ok(grads);
    }
    let scale = 1.0 / batch.rows() as f64;
    let mut scratch = Scratch::new(p);
    for i in 0..batch.rows() {
        accumulate_example(p, batch.row(i), batch.y[i], scale, &mut grads, &mut scratch);
    }
    Ok(grads)
}
