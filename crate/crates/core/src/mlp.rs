//! Multilayer perceptron: forward pass with node ablation, backprop gradient
//! of the mean squared error, and a seeded SGD training loop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::node::{AblationMask, NodeId};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
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
            Activation::Identity => 1.0,
        }
    }
}

/// A fully connected feedforward network.
///
/// `weights[l]` maps layer `l` to layer `l + 1` and has shape
/// `layer_sizes[l + 1] x layer_sizes[l]` (row = destination unit).
/// `activations[h]` applies to hidden layer `h + 1`; the output layer is
/// always linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

/// Gradient with the same shapes as an [`MlpSpec`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpOutput {
    pub output: Vec<f64>,
    pub node_activations: BTreeMap<NodeId, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub activation: Activation,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 0.1,
            epochs: 1000,
            batch_size: 32,
            activation: Activation::Relu,
        }
    }
}

impl MlpSpec {
    /// Builds a network with every weight and bias drawn uniformly from
    /// `[-0.5, 0.5)`. Parameters are drawn layer by layer, weights in
    /// row-major order followed by that layer's biases.
    pub fn seeded_init(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        check_layer_sizes(layer_sizes)?;
        let mut rng = rng::seeded(seed, 0);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w: Vec<Vec<f64>> = (0..fan_out)
                .map(|_| (0..fan_in).map(|_| rng::uniform(&mut rng, -0.5, 0.5)).collect())
                .collect();
            let b: Vec<f64> = (0..fan_out).map(|_| rng::uniform(&mut rng, -0.5, 0.5)).collect();
            weights.push(w);
            biases.push(b);
        }
        Ok(MlpSpec {
            layer_sizes: layer_sizes.to_vec(),
            activations: vec![activation; layer_sizes.len() - 2],
            weights,
            biases,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_layer_sizes(&self.layer_sizes)?;
        let depth = self.layer_sizes.len() - 1;
        if self.activations.len() != depth - 1 {
            return Err(Error::Config(format!(
                "mlp has {} hidden layers but {} activations",
                depth - 1,
                self.activations.len()
            )));
        }
        if self.weights.len() != depth || self.biases.len() != depth {
            return Err(Error::Config(format!(
                "mlp needs {depth} weight matrices and bias vectors, got {} and {}",
                self.weights.len(),
                self.biases.len()
            )));
        }
        for l in 0..depth {
            let (rows, cols) = (self.layer_sizes[l + 1], self.layer_sizes[l]);
            let w = &self.weights[l];
            if w.len() != rows || w.iter().any(|row| row.len() != cols) {
                return Err(Error::Config(format!(
                    "weights[{l}] must be {rows}x{cols}"
                )));
            }
            if self.biases[l].len() != rows {
                return Err(Error::Config(format!("biases[{l}] must have length {rows}")));
            }
            let finite = w.iter().flatten().chain(&self.biases[l]).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Config(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated layer sizes")
    }

    fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    fn activation_for(&self, layer: usize) -> Activation {
        // `layer` indexes layer_sizes; the last layer is linear.
        if layer == self.depth() {
            Activation::Identity
        } else {
            self.activations[layer - 1]
        }
    }

    /// Instrumented nodes of this network: every hidden and output unit.
    pub fn node_ids(&self, model_index: usize) -> impl Iterator<Item = NodeId> + '_ {
        self.layer_sizes
            .iter()
            .enumerate()
            .skip(1)
            .flat_map(move |(layer, &width)| (0..width).map(move |u| NodeId::pool(model_index, layer, u)))
    }

    fn owns(&self, model_index: usize, node: &NodeId) -> bool {
        node.is_pool()
            && node.model_index == model_index
            && node.layer >= 1
            && node.layer < self.layer_sizes.len()
            && node.unit < self.layer_sizes[node.layer]
    }

    /// Feedforward pass. Masked units have their post-activation output
    /// clamped to exactly 0 before it propagates; every hidden and output
    /// unit appears once in `node_activations`.
    pub fn forward(&self, model_index: usize, input: &[f64], mask: &AblationMask) -> Result<MlpOutput> {
        if input.len() != self.input_dim() {
            return Err(Error::Config(format!(
                "mlp {model_index} expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        if let Some(bad) = mask.iter().find(|n| !self.owns(model_index, n)) {
            return Err(Error::foreign_node(*bad, &format!("mlp {model_index}")));
        }

        let mut node_activations = BTreeMap::new();
        let mut current = input.to_vec();
        for l in 0..self.depth() {
            let layer = l + 1;
            let act = self.activation_for(layer);
            let next: Vec<f64> = self.weights[l]
                .iter()
                .zip(&self.biases[l])
                .enumerate()
                .map(|(unit, (row, b))| {
                    let id = NodeId::pool(model_index, layer, unit);
                    let value = if mask.contains(&id) {
                        0.0
                    } else {
                        act.apply(dot(row, &current) + b)
                    };
                    node_activations.insert(id, value);
                    value
                })
                .collect();
            current = next;
        }
        Ok(MlpOutput {
            output: current,
            node_activations,
        })
    }

    /// Unmasked forward pass keeping pre-activations (`zs[l]` for layer
    /// `l + 1`) and activations (`acts[0]` is the input).
    fn forward_cached(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut zs = Vec::with_capacity(self.depth());
        let mut acts = Vec::with_capacity(self.depth() + 1);
        acts.push(input.to_vec());
        for l in 0..self.depth() {
            let act = self.activation_for(l + 1);
            let prev = &acts[l];
            let z: Vec<f64> = self.weights[l]
                .iter()
                .zip(&self.biases[l])
                .map(|(row, b)| dot(row, prev) + b)
                .collect();
            let a = z.iter().map(|&v| act.apply(v)).collect();
            zs.push(z);
            acts.push(a);
        }
        (zs, acts)
    }

    /// Mean over the batch of `0.5 * ||y - t||^2`.
    pub fn loss(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
        self.check_batch(inputs, targets)?;
        let total: f64 = inputs
            .iter()
            .zip(targets)
            .map(|(x, t)| {
                let (_, acts) = self.forward_cached(x);
                let y = acts.last().expect("output layer");
                0.5 * y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .sum();
        Ok(total / inputs.len() as f64)
    }

    /// Exact gradient of [`MlpSpec::loss`] by backpropagation.
    pub fn gradient(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<MlpGradient> {
        self.check_batch(inputs, targets)?;
        let mut grad = self.zero_gradient();
        for (x, t) in inputs.iter().zip(targets) {
            let (zs, acts) = self.forward_cached(x);
            let depth = self.depth();
            let mut delta: Vec<f64> = acts[depth].iter().zip(t).map(|(y, t)| y - t).collect();
            for l in (0..depth).rev() {
                for (i, d) in delta.iter().enumerate() {
                    grad.biases[l][i] += d;
                    for (g, a) in grad.weights[l][i].iter_mut().zip(&acts[l]) {
                        *g += d * a;
                    }
                }
                if l > 0 {
                    let act = self.activation_for(l);
                    delta = (0..self.layer_sizes[l])
                        .map(|j| {
                            let back: f64 = self.weights[l].iter().zip(&delta).map(|(row, d)| row[j] * d).sum();
                            back * act.derivative(zs[l - 1][j])
                        })
                        .collect();
                }
            }
        }
        let scale = 1.0 / inputs.len() as f64;
        grad.weights.iter_mut().flatten().flatten().for_each(|g| *g *= scale);
        grad.biases.iter_mut().flatten().for_each(|g| *g *= scale);
        Ok(grad)
    }

    fn zero_gradient(&self) -> MlpGradient {
        MlpGradient {
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().map(|row| vec![0.0; row.len()]).collect())
                .collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn check_batch(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::Argument("gradient batch is empty".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::Argument(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(x) = inputs.iter().find(|x| x.len() != self.input_dim()) {
            return Err(Error::Config(format!(
                "batch input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if let Some(t) = targets.iter().find(|t| t.len() != self.output_dim()) {
            return Err(Error::Config(format!(
                "target has length {}, network output width is {}",
                t.len(),
                self.output_dim()
            )));
        }
        Ok(())
    }

    fn apply_step(&mut self, grad: &MlpGradient, learning_rate: f64) {
        for (w, g) in self.weights.iter_mut().flatten().flatten().zip(grad.weights.iter().flatten().flatten()) {
            *w -= learning_rate * g;
        }
        for (b, g) in self.biases.iter_mut().flatten().zip(grad.biases.iter().flatten()) {
            *b -= learning_rate * g;
        }
    }
}

/// Trains a classifier network with one-hot targets by mini-batch SGD.
///
/// The output width (`layer_sizes.last()`) is the number of classes.
/// Batches are taken in dataset order every epoch, so identical inputs and
/// seed give bitwise identical weights. `epochs == 0` returns the seeded
/// initialization unchanged.
pub fn mlp_train(
    layer_sizes: &[usize],
    features: &[Vec<f64>],
    labels: &[usize],
    params: &TrainParams,
    seed: u64,
) -> Result<MlpSpec> {
    let mut spec = MlpSpec::seeded_init(layer_sizes, params.activation, seed)?;
    if features.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if params.batch_size == 0 {
        return Err(Error::Argument("batch_size must be at least 1".into()));
    }
    if !(params.learning_rate.is_finite() && params.learning_rate > 0.0) {
        return Err(Error::Argument("learning_rate must be positive and finite".into()));
    }
    let classes = spec.output_dim();
    let targets = one_hot_targets(labels, classes)?;
    if let Some((row, _)) = features.iter().enumerate().find(|(_, x)| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(format!("row {row} has a non-finite feature")));
    }

    for _ in 0..params.epochs {
        for (xs, ts) in features.chunks(params.batch_size).zip(targets.chunks(params.batch_size)) {
            let grad = spec.gradient(xs, ts)?;
            spec.apply_step(&grad, params.learning_rate);
        }
    }
    Ok(spec)
}

pub(crate) fn one_hot_targets(labels: &[usize], classes: usize) -> Result<Vec<Vec<f64>>> {
    labels
        .iter()
        .enumerate()
        .map(|(row, &label)| {
            if label >= classes {
                return Err(Error::Data(format!(
                    "label {label} at row {row} is out of range for {classes} classes"
                )));
            }
            let mut t = vec![0.0; classes];
            t[label] = 1.0;
            Ok(t)
        })
        .collect()
}

fn check_layer_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config("mlp needs at least an input and an output layer".into()));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config("mlp layer widths must be non-zero".into()));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
