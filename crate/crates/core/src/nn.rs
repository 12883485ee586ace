//! Dense two-class classifier with exact gradients.
//!
//! Parameters live in one flat `f64` vector. For each layer, in order, the
//! vector holds the row-major weight matrix of shape `(out, in)` followed by
//! the bias vector of length `out`. Merging and checkpoints rely on this
//! layout.
//!
//! Hidden layers use `tanh`; the output layer is a two-way softmax and the
//! training loss is cross-entropy on the probability of the true label.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Pixels in one flattened 16x16 patch.
pub const INPUT_SIZE: usize = 256;
/// Number of output classes.
pub const OUTPUT_SIZE: usize = 2;
/// Pixels are shifted by this constant before the first layer.
pub const INPUT_CENTER: f64 = 0.5;
/// Lower bound applied to probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Binary ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Real = 0,
    Generated = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Real),
            1 => Some(Label::Generated),
            _ => None,
        }
    }
}

/// Nonlinearity applied after every hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

impl Architecture {
    /// Validates the layer list: input 256, output 2, at least one hidden layer.
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::InvalidArchitecture(format!(
                "need input, at least one hidden and an output layer, got {} sizes",
                layer_sizes.len()
            )));
        }
        if let Some(pos) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidArchitecture(format!("layer {pos} has size 0")));
        }
        if layer_sizes[0] != INPUT_SIZE {
            return Err(Error::InvalidArchitecture(format!(
                "input size must be {INPUT_SIZE}, got {}",
                layer_sizes[0]
            )));
        }
        if *layer_sizes.last().unwrap() != OUTPUT_SIZE {
            return Err(Error::InvalidArchitecture(format!(
                "output size must be {OUTPUT_SIZE}, got {}",
                layer_sizes.last().unwrap()
            )));
        }
        Ok(Self { layer_sizes, activation })
    }

    /// The default detector: `[256, 64, 32, 2]` with `tanh`.
    pub fn default_detector() -> Self {
        Self::new(vec![INPUT_SIZE, 64, 32, OUTPUT_SIZE], Activation::Tanh).unwrap()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Sum over layers of `in*out + out`.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// `(fan_in, fan_out, offset)` for each layer in flat-layout order.
    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.layer_sizes.windows(2).map(move |w| {
            let start = offset;
            offset += w[0] * w[1] + w[1];
            (w[0], w[1], start)
        })
    }
}

/// Flat parameter vector together with its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    weights: Vec<f64>,
}

impl ModelParams {
    pub fn from_weights(arch: Architecture, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != arch.param_count() {
            return Err(Error::ParamCount { expected: arch.param_count(), actual: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        Ok(Self { arch, weights })
    }

    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.param_count();
        Self { arch, weights: vec![0.0; n] }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}

/// Loss gradient in the same flat layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    arch: Architecture,
    values: Vec<f64>,
}

impl Gradient {
    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::ParamCount { expected: arch.param_count(), actual: values.len() });
        }
        Ok(Self { arch, values })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, alpha: f64) -> Gradient {
        Gradient { arch: self.arch.clone(), values: self.values.iter().map(|v| v * alpha).collect() }
    }
}

/// Class probabilities `(p0, p1)` summing to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbPair {
    pub p0: f64,
    pub p1: f64,
}

impl ProbPair {
    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Real => self.p0,
            Label::Generated => self.p1,
        }
    }

    pub fn argmax(&self) -> Label {
        if self.p1 > self.p0 {
            Label::Generated
        } else {
            Label::Real
        }
    }

    /// Numerically stable two-way softmax.
    fn from_logits(z0: f64, z1: f64) -> Self {
        // p1 = sigmoid(z1 - z0); compute the smaller side directly and derive
        // the other as its complement so the pair sums to one.
        let d = z1 - z0;
        if d >= 0.0 {
            let p0 = 1.0 / (1.0 + d.exp());
            Self { p0, p1: 1.0 - p0 }
        } else {
            let p1 = 1.0 / (1.0 + (-d).exp());
            Self { p0: 1.0 - p1, p1 }
        }
    }
}

/// Anything that can be fed to the trainer.
pub trait Example {
    fn pixels(&self) -> &[f64];
    fn label(&self) -> Label;
}

impl Example for (Vec<f64>, Label) {
    fn pixels(&self) -> &[f64] {
        &self.0
    }
    fn label(&self) -> Label {
        self.1
    }
}

/// Glorot-uniform weights, zero biases; deterministic in `(arch, seed)`.
pub fn init_params(arch: &Architecture, seed: u64) -> ModelParams {
    let mut weights = vec![0.0; arch.param_count()];
    for (layer, (fan_in, fan_out, offset)) in arch.layers().enumerate() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut rng = rng_for(&[seed, 0x1417, layer as u64]);
        for w in &mut weights[offset..offset + fan_in * fan_out] {
            *w = rng.random_range(-bound..bound);
        }
    }
    ModelParams { arch: arch.clone(), weights }
}

fn check_input(params: &ModelParams, pixels: &[f64]) -> Result<()> {
    let expected = params.arch.input_size();
    if pixels.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: pixels.len() });
    }
    if pixels.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("pixels"));
    }
    Ok(())
}

/// Runs the network and returns all layer outputs; the last entry holds the
/// two logits.
fn activations(params: &ModelParams, pixels: &[f64]) -> Vec<Vec<f64>> {
    let arch = &params.arch;
    let n_layers = arch.layer_sizes.len() - 1;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
    acts.push(pixels.iter().map(|p| p - INPUT_CENTER).collect());
    for (l, (fan_in, fan_out, offset)) in arch.layers().enumerate() {
        let w = &params.weights[offset..offset + fan_in * fan_out];
        let b = &params.weights[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        let input = &acts[l];
        let is_hidden = l + 1 < n_layers;
        let out: Vec<f64> = w
            .chunks_exact(fan_in)
            .zip(b)
            .map(|(row, &bias)| {
                let z = row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>() + bias;
                if is_hidden {
                    arch.activation.apply(z)
                } else {
                    z
                }
            })
            .collect();
        acts.push(out);
    }
    acts
}

pub fn forward(params: &ModelParams, pixels: &[f64]) -> Result<ProbPair> {
    check_input(params, pixels)?;
    let acts = activations(params, pixels);
    let logits = acts.last().unwrap();
    Ok(ProbPair::from_logits(logits[0], logits[1]))
}

/// Cross-entropy `-ln max(p[label], 1e-12)`.
pub fn loss(params: &ModelParams, pixels: &[f64], label: Label) -> Result<f64> {
    let p = forward(params, pixels)?;
    Ok(-p.get(label).max(PROB_FLOOR).ln())
}

/// Adds `scale * dL/dθ` for one sample into `acc`.
fn accumulate_gradient(params: &ModelParams, pixels: &[f64], label: Label, scale: f64, acc: &mut [f64]) {
    let arch = &params.arch;
    let acts = activations(params, pixels);
    let logits = acts.last().unwrap();
    let p = ProbPair::from_logits(logits[0], logits[1]);
    if p.get(label) < PROB_FLOOR {
        // The floored loss is constant here.
        return;
    }
    let mut delta = vec![p.p0, p.p1];
    delta[label.index()] -= 1.0;

    let layers: Vec<_> = arch.layers().collect();
    for (l, &(fan_in, fan_out, offset)) in layers.iter().enumerate().rev() {
        let input = &acts[l];
        let gw = &mut acc[offset..offset + fan_in * fan_out + fan_out];
        let (gw_mat, gb) = gw.split_at_mut(fan_in * fan_out);
        for (j, &d) in delta.iter().enumerate() {
            let ds = d * scale;
            gb[j] += ds;
            for (g, x) in gw_mat[j * fan_in..(j + 1) * fan_in].iter_mut().zip(input) {
                *g += ds * x;
            }
        }
        if l == 0 {
            break;
        }
        let w = &params.weights[offset..offset + fan_in * fan_out];
        let mut prev = vec![0.0; fan_in];
        for (j, &d) in delta.iter().enumerate() {
            for (pv, wv) in prev.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                *pv += d * wv;
            }
        }
        for (pv, &a) in prev.iter_mut().zip(input) {
            *pv *= arch.activation.derivative_from_output(a);
        }
        delta = prev;
    }
}

/// Exact gradient of [`loss`] with respect to every parameter.
pub fn backward(params: &ModelParams, pixels: &[f64], label: Label) -> Result<Gradient> {
    check_input(params, pixels)?;
    let mut values = vec![0.0; params.weights.len()];
    accumulate_gradient(params, pixels, label, 1.0, &mut values);
    Ok(Gradient { arch: params.arch.clone(), values })
}

/// L2 norm of the full gradient vector.
pub fn grad_norm(g: &Gradient) -> f64 {
    g.values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Mini-batch SGD hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

/// Plain mini-batch SGD. Each epoch shuffles with a stream keyed by
/// `(seed, epoch)`; a step subtracts `lr` times the mean per-sample gradient.
pub fn sgd_epochs<E: Example>(
    params: &ModelParams,
    dataset: &[E],
    cfg: SgdConfig,
    seed: u64,
) -> Result<ModelParams> {
    sgd_epochs_augmented(params, dataset, cfg, seed, |_, _, _| None)
}

/// [`sgd_epochs`] with a per-visit augmentation hook. `augment(epoch, index,
/// example)` may return replacement pixels for that visit.
pub fn sgd_epochs_augmented<E, F>(
    params: &ModelParams,
    dataset: &[E],
    cfg: SgdConfig,
    seed: u64,
    augment: F,
) -> Result<ModelParams>
where
    E: Example,
    F: Fn(usize, usize, &E) -> Option<Vec<f64>>,
{
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if !cfg.lr.is_finite() {
        return Err(Error::NonFinite("learning rate"));
    }
    for ex in dataset {
        check_input(params, ex.pixels())?;
    }
    let mut current = params.clone();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut grad = vec![0.0; current.weights.len()];
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_for(&[seed, 0x5E9D, epoch as u64]));
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &dataset[i];
                match augment(epoch, i, ex) {
                    Some(px) => {
                        check_input(&current, &px)?;
                        accumulate_gradient(&current, &px, ex.label(), scale, &mut grad)
                    }
                    None => accumulate_gradient(&current, ex.pixels(), ex.label(), scale, &mut grad),
                }
            }
            for (w, g) in current.weights.iter_mut().zip(&grad) {
                *w -= cfg.lr * g;
            }
        }
    }
    if current.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("weights after training"));
    }
    Ok(current)
}
