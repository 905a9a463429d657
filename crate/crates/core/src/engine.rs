//! The decision engine: a softmax read-out over the pooled features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::dot;
use crate::node::{AblationMask, Component, NodeId, ENGINE_FEATURE_LAYER};
use crate::rng;

/// Linear read-out; `weights` is `num_classes x pooled_feature_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSpec {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

/// A labelled decision.
///
/// `scores` form a probability vector, `label` is the lowest index attaining
/// the top score and `margin` is the top score minus the runner-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub scores: Vec<f64>,
    pub label: usize,
    pub margin: f64,
}

impl Decision {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mut label = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[label] {
                label = i;
            }
        }
        let runner_up = scores
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label)
            .map(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = if runner_up.is_finite() {
            scores[label] - runner_up
        } else {
            scores[label]
        };
        Decision {
            scores,
            label,
            margin,
        }
    }

    /// Bitwise equality of scores, label and margin.
    pub fn bit_eq(&self, other: &Decision) -> bool {
        self.label == other.label
            && self.margin.to_bits() == other.margin.to_bits()
            && self.scores.len() == other.scores.len()
            && self.scores.iter().zip(&other.scores).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineTrainParams {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for EngineTrainParams {
    fn default() -> Self {
        EngineTrainParams {
            learning_rate: 0.5,
            epochs: 500,
        }
    }
}

impl EngineSpec {
    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() < 2 {
            return Err(Error::Config("decision engine needs at least two classes".into()));
        }
        let dim = self.feature_dim();
        if dim == 0 || self.weights.iter().any(|row| row.len() != dim) {
            return Err(Error::Config("engine weight rows must share a non-zero width".into()));
        }
        if self.biases.len() != self.weights.len() {
            return Err(Error::Config(format!(
                "engine has {} weight rows but {} biases",
                self.weights.len(),
                self.biases.len()
            )));
        }
        if self.weights.iter().flatten().chain(&self.biases).any(|v| !v.is_finite()) {
            return Err(Error::Config("engine parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| dot(row, features) + b)
            .collect()
    }

    /// Reads out a decision. Masked feature slots are clamped to 0; slot
    /// activations are the (possibly clamped) feature values and score
    /// nodes record the class probabilities.
    pub fn readout(&self, features: &[f64], mask: &AblationMask) -> Result<(Decision, BTreeMap<NodeId, f64>)> {
        if features.len() != self.feature_dim() {
            return Err(Error::Config(format!(
                "engine expects {} pooled features, got {}",
                self.feature_dim(),
                features.len()
            )));
        }
        if let Some(bad) = mask.iter().find(|n| {
            !(n.component == Component::DecisionEngine
                && n.layer == ENGINE_FEATURE_LAYER
                && n.unit < self.feature_dim())
        }) {
            return Err(Error::Mask(format!("node {bad} is not an ablatable engine slot")));
        }
        let clamped: Vec<f64> = features
            .iter()
            .enumerate()
            .map(|(j, &v)| if mask.contains(&NodeId::engine_slot(j)) { 0.0 } else { v })
            .collect();
        let decision = Decision::from_scores(softmax(&self.logits(&clamped)));
        let mut nodes: BTreeMap<NodeId, f64> = clamped
            .iter()
            .enumerate()
            .map(|(j, &v)| (NodeId::engine_slot(j), v))
            .collect();
        nodes.extend(
            decision
                .scores
                .iter()
                .enumerate()
                .map(|(c, &s)| (NodeId::engine_score(c), s)),
        );
        Ok((decision, nodes))
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Fits an engine by full-batch gradient descent on the mean softmax
/// cross-entropy. Weights start uniform in `[-0.5, 0.5)` from `seed`.
pub fn engine_train(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    params: &EngineTrainParams,
    seed: u64,
) -> Result<EngineSpec> {
    let Some(first) = features.first() else {
        return Err(Error::Argument("engine training set is empty".into()));
    };
    if num_classes < 2 {
        return Err(Error::Config("decision engine needs at least two classes".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        return Err(Error::Data(format!("label {l} at row {row} is out of range")));
    }
    let dim = first.len();
    let mut rng = rng::seeded(seed, rng::ENGINE_STREAM);
    let mut engine = EngineSpec {
        weights: (0..num_classes)
            .map(|_| (0..dim).map(|_| rng::uniform(&mut rng, -0.5, 0.5)).collect())
            .collect(),
        biases: (0..num_classes).map(|_| rng::uniform(&mut rng, -0.5, 0.5)).collect(),
    };
    engine.validate()?;

    let scale = 1.0 / features.len() as f64;
    for _ in 0..params.epochs {
        let mut gw = vec![vec![0.0; dim]; num_classes];
        let mut gb = vec![0.0; num_classes];
        for (x, &label) in features.iter().zip(labels) {
            let p = softmax(&engine.logits(x));
            for c in 0..num_classes {
                let d = p[c] - if c == label { 1.0 } else { 0.0 };
                gb[c] += d;
                for (g, v) in gw[c].iter_mut().zip(x) {
                    *g += d * v;
                }
            }
        }
        for (row, grow) in engine.weights.iter_mut().zip(&gw) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= params.learning_rate * g * scale;
            }
        }
        for (b, g) in engine.biases.iter_mut().zip(&gb) {
            *b -= params.learning_rate * g * scale;
        }
    }
    Ok(engine)
}
