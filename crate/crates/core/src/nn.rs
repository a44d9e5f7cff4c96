//! Dense feed-forward classifier with analytic backpropagation.
//!
//! Hidden layers use ReLU, the output layer is affine and feeds a softmax
//! cross-entropy loss. The output layer (the "head") grows by appending rows
//! whenever a new task introduces classes.
//!
//! # Parameter layout
//!
//! Flattened parameter vectors always follow the same order: layer 0 weights
//! (row-major, one row per output unit), layer 0 biases, layer 1 weights,
//! layer 1 biases, and so on through the output layer. Gradients, Fisher
//! diagonals and anchors all share this layout.

use std::ops::{Deref, DerefMut};

use crate::error::{check_len, Error, Result};
use crate::rng::SeededRng;

/// Layer widths of a network.
///
/// `output_dim` is the number of classes seen so far. It is zero only for a
/// freshly built network that has not been given a head yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkShape {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
}

impl NetworkShape {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input_dim must be >= 1".into()));
        }
        if hidden_dims.contains(&0) {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        Ok(Self {
            input_dim,
            hidden_dims,
            output_dim,
        })
    }

    /// `(fan_in, fan_out)` for every layer, input side first.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden_dims.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden_dims);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| fan_in * fan_out + fan_out)
            .sum()
    }

    /// Width of the last hidden layer, i.e. the fan-in of the head.
    pub fn head_fan_in(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.input_dim)
    }
}

/// Nonlinearity applied after every hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `(fan_out, fan_in)`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            biases: vec![0.0; fan_out],
        }
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = (0..fan_in * fan_out).map(|_| rng.uniform_in(-limit, limit)).collect();
        Self {
            fan_in,
            fan_out,
            weights,
            biases: vec![0.0; fan_out],
        }
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.fan_in + col]
    }

    fn parameter_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.fan_in.max(1))
                .take(self.fan_out)
                .zip(&self.biases)
                .map(|(row, &b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b),
        );
    }
}

/// Flat view of every trainable parameter, in the canonical layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledExample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    shape: NetworkShape,
    layers: Vec<DenseLayer>,
    activation: Activation,
}

impl Network {
    /// Fresh network with Glorot-uniform weights and zero biases.
    pub fn new(shape: NetworkShape, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let layers = shape
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| DenseLayer::glorot_uniform(fan_in, fan_out, &mut rng))
            .collect();
        Self {
            shape,
            layers,
            activation: Activation::Relu,
        }
    }

    pub fn zeros(shape: NetworkShape) -> Self {
        let layers = shape
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| DenseLayer::zeros(fan_in, fan_out))
            .collect();
        Self {
            shape,
            layers,
            activation: Activation::Relu,
        }
    }

    /// Builds a network from explicit layers; consecutive layers must chain.
    pub fn from_layers(input_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        let Some(head) = layers.last() else {
            return Err(Error::Config("a network needs at least one layer".into()));
        };
        let mut fan_in = input_dim;
        for layer in &layers {
            check_len("layer fan-in", fan_in, layer.fan_in)?;
            check_len("layer weights", layer.fan_in * layer.fan_out, layer.weights.len())?;
            check_len("layer biases", layer.fan_out, layer.biases.len())?;
            fan_in = layer.fan_out;
        }
        let hidden_dims = layers[..layers.len() - 1].iter().map(|l| l.fan_out).collect();
        let shape = NetworkShape::new(input_dim, hidden_dims, head.fan_out)?;
        Ok(Self {
            shape,
            layers,
            activation: Activation::Relu,
        })
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_dim(&self) -> usize {
        self.shape.output_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    /// Pre-softmax logits for one input.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        check_len("forward input", self.shape.input_dim, features.len())?;
        let mut current = features.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&current, &mut next);
            if l != last {
                for z in next.iter_mut() {
                    *z = self.activation.apply(*z);
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    /// Index of the largest logit; ties go to the lowest index.
    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        let logits = self.forward(features)?;
        if logits.is_empty() {
            return Err(Error::Config("network has no output head".into()));
        }
        Ok(argmax(&logits))
    }

    /// Cross-entropy loss of one example.
    pub fn loss(&self, example: &LabeledExample) -> Result<f64> {
        softmax_cross_entropy(&self.forward(&example.features)?, example.label)
    }

    /// Gradient of the softmax cross-entropy of one example.
    pub fn backward(&self, example: &LabeledExample) -> Result<ParameterVector> {
        let mut grad = vec![0.0; self.parameter_count()];
        self.accumulate_gradient(example, &mut grad)?;
        Ok(ParameterVector::new(grad))
    }

    /// Mean loss and mean gradient over a batch.
    pub fn batch_gradient<'a, I>(&self, batch: I) -> Result<(f64, ParameterVector)>
    where
        I: IntoIterator<Item = &'a LabeledExample>,
    {
        let mut grad = vec![0.0; self.parameter_count()];
        let mut loss = 0.0;
        let mut count = 0usize;
        for example in batch {
            loss += self.accumulate_gradient(example, &mut grad)?;
            count += 1;
        }
        if count == 0 {
            return Err(Error::Consistency("empty batch".into()));
        }
        let n = count as f64;
        for g in grad.iter_mut() {
            *g /= n;
        }
        Ok((loss / n, ParameterVector::new(grad)))
    }

    /// Adds this example's gradient into `grad` and returns its loss.
    pub fn accumulate_gradient(&self, example: &LabeledExample, grad: &mut [f64]) -> Result<f64> {
        check_len("gradient buffer", self.parameter_count(), grad.len())?;
        check_len("example features", self.shape.input_dim, example.features.len())?;
        if example.label >= self.shape.output_dim {
            return Err(Error::Label {
                label: example.label,
                classes: self.shape.output_dim,
            });
        }

        // activations[l] is the input to layer l; pre[l] its pre-activation output.
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        activations.push(example.features.clone());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.fan_out);
            layer.affine(&activations[l], &mut z);
            if l != last {
                activations.push(z.iter().map(|&v| self.activation.apply(v)).collect());
            }
            pre.push(z);
        }

        let logits = &pre[last];
        let probs = softmax(logits);
        let loss = log_sum_exp(logits) - logits[example.label];

        let mut delta = probs;
        delta[example.label] -= 1.0;

        let offsets = self.layer_offsets();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &activations[l];
            let w_off = offsets[l];
            let b_off = w_off + layer.weights.len();
            for (row, &d) in delta.iter().enumerate() {
                let base = w_off + row * layer.fan_in;
                for (g, &x) in grad[base..base + layer.fan_in].iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[b_off + row] += d;
            }
            if l > 0 {
                let prev_pre = &pre[l - 1];
                let mut prev_delta = vec![0.0; layer.fan_in];
                for (row, &d) in delta.iter().enumerate() {
                    let w_row = &layer.weights[row * layer.fan_in..(row + 1) * layer.fan_in];
                    for (pd, &w) in prev_delta.iter_mut().zip(w_row) {
                        *pd += w * d;
                    }
                }
                for (pd, &z) in prev_delta.iter_mut().zip(prev_pre) {
                    *pd *= self.activation.derivative(z);
                }
                delta = prev_delta;
            }
        }
        Ok(loss)
    }

    /// Copy of this network with `new_classes` extra output rows, all zero.
    /// Existing parameters are carried over unchanged.
    pub fn expand_head(&self, new_classes: usize) -> Result<Network> {
        if new_classes == 0 {
            return Err(Error::Config("head expansion needs at least one class".into()));
        }
        let mut expanded = self.clone();
        let head = expanded
            .layers
            .last_mut()
            .expect("networks always have an output layer");
        head.weights.resize(head.weights.len() + new_classes * head.fan_in, 0.0);
        head.biases.resize(head.biases.len() + new_classes, 0.0);
        head.fan_out += new_classes;
        expanded.shape.output_dim += new_classes;
        Ok(expanded)
    }

    pub fn flatten_params(&self) -> ParameterVector {
        let mut values = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            values.extend_from_slice(&layer.weights);
            values.extend_from_slice(&layer.biases);
        }
        ParameterVector::new(values)
    }

    /// Network with this shape and the given parameters.
    pub fn unflatten_params(&self, params: &[f64]) -> Result<Network> {
        let mut net = self.clone();
        net.set_params(params)?;
        Ok(net)
    }

    /// Overwrites every parameter in place from a flat vector.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len("parameter vector", self.parameter_count(), params.len())?;
        let mut rest = params;
        for layer in &mut self.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            layer.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(layer.biases.len());
            layer.biases.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for layer in &self.layers {
            offsets.push(acc);
            acc += layer.parameter_count();
        }
        offsets
    }
}

/// Maps a flat vector laid out for `shape` onto the layout after the head
/// grows by `new_classes` rows. Slots for the new rows are set to `fill`.
pub fn pad_for_head_growth(shape: &NetworkShape, values: &[f64], new_classes: usize, fill: f64) -> Result<Vec<f64>> {
    check_len("padded vector", shape.parameter_count(), values.len())?;
    let head_params = shape.head_fan_in() * shape.output_dim + shape.output_dim;
    let body = values.len() - head_params;
    let head_weights = shape.head_fan_in() * shape.output_dim;
    let mut out = Vec::with_capacity(values.len() + new_classes * (shape.head_fan_in() + 1));
    out.extend_from_slice(&values[..body + head_weights]);
    out.extend(std::iter::repeat_n(fill, new_classes * shape.head_fan_in()));
    out.extend_from_slice(&values[body + head_weights..]);
    out.extend(std::iter::repeat_n(fill, new_classes));
    Ok(out)
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-ln softmax(logits)[label]`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Label {
            label,
            classes: logits.len(),
        });
    }
    Ok(log_sum_exp(logits) - logits[label])
}
