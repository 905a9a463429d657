//! The model pool and the full decision path through the stack.
//!
//! Every pool member reads the same input vector. Member outputs are
//! concatenated in `model_index` order into the pooled features that the
//! decision engine reads out.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::digest;
use crate::engine::{Decision, EngineSpec};
use crate::error::{Error, Result};
use crate::kmeans::KMeansSpec;
use crate::mlp::MlpSpec;
use crate::node::{AblationMask, Component, NodeId};
use crate::registry::{register_nodes, NodeRegistry};
use crate::trace::ActivationTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    Mlp(MlpSpec),
    Kmeans(KMeansSpec),
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Mlp(m) => m.validate(),
            ModelSpec::Kmeans(k) => k.validate(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelSpec::Mlp(m) => m.input_dim(),
            ModelSpec::Kmeans(k) => k.dim(),
        }
    }

    /// Width of this member's block in the pooled features.
    pub fn output_dim(&self) -> usize {
        match self {
            ModelSpec::Mlp(m) => m.output_dim(),
            ModelSpec::Kmeans(k) => k.k(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub models: Vec<ModelSpec>,
    pub engine: EngineSpec,
    pub seed: u64,
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.models.first() else {
            return Err(Error::Config("model pool is empty".into()));
        };
        for (i, m) in self.models.iter().enumerate() {
            m.validate()
                .map_err(|e| Error::Config(format!("model {i}: {e}")))?;
        }
        let dim = first.input_dim();
        if let Some((i, m)) = self.models.iter().enumerate().find(|(_, m)| m.input_dim() != dim) {
            return Err(Error::Config(format!(
                "model {i} reads {} features but model 0 reads {dim}",
                m.input_dim()
            )));
        }
        self.engine.validate()?;
        if self.engine.feature_dim() != self.pooled_feature_dim() {
            return Err(Error::Config(format!(
                "engine reads {} features but the pool produces {}",
                self.engine.feature_dim(),
                self.pooled_feature_dim()
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.models.first().map_or(0, ModelSpec::input_dim)
    }

    pub fn pooled_feature_dim(&self) -> usize {
        self.models.iter().map(ModelSpec::output_dim).sum()
    }
}

/// A validated pool with its node registry and configuration digest,
/// prepared once and replayed many times.
#[derive(Debug, Clone)]
pub struct DecisionStack {
    config: PoolConfig,
    registry: NodeRegistry,
    config_digest: u64,
}

struct Forward {
    decision: Decision,
    records: BTreeMap<NodeId, f64>,
}

impl DecisionStack {
    pub fn new(config: PoolConfig) -> Result<Self> {
        let registry = register_nodes(&config)?;
        let config_digest = digest::config_digest(&config);
        Ok(DecisionStack {
            config,
            registry,
            config_digest,
        })
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    pub fn registry(&self) -> &NodeRegistry {
        &self.registry
    }

    pub fn config_digest(&self) -> u64 {
        self.config_digest
    }

    /// Runs the full stack and captures a trace covering every registered
    /// node.
    pub fn decide(&self, input: &[f64], mask: &AblationMask) -> Result<(Decision, ActivationTrace)> {
        let input_digest = digest::input_digest(input)?;
        let Forward { decision, records } = self.forward(input, mask)?;
        if records.len() != self.registry.len() {
            return Err(Error::Invariant(format!(
                "trace has {} records for {} registered nodes",
                records.len(),
                self.registry.len()
            )));
        }
        let decision_id = digest::decision_id(self.config_digest, input_digest, mask, self.config.seed);
        let trace = ActivationTrace {
            decision_id,
            input_digest,
            seed: self.config.seed,
            mask_applied: mask.clone(),
            records,
            decision: decision.clone(),
        };
        Ok((decision, trace))
    }

    /// The decision alone, without building a trace.
    pub fn replay(&self, input: &[f64], mask: &AblationMask) -> Result<Decision> {
        if let Some(v) = input.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("input contains non-finite value {v}")));
        }
        Ok(self.forward(input, mask)?.decision)
    }

    fn forward(&self, input: &[f64], mask: &AblationMask) -> Result<Forward> {
        if input.len() != self.config.input_dim() {
            return Err(Error::Config(format!(
                "pool expects {} inputs, got {}",
                self.config.input_dim(),
                input.len()
            )));
        }
        for node in mask {
            match self.registry.get(node) {
                None => return Err(Error::Mask(format!("node {node} is not registered"))),
                Some(info) if !info.ablatable => {
                    return Err(Error::Mask(format!("node {node} is not ablatable")))
                }
                Some(_) => {}
            }
        }

        let mut records = BTreeMap::new();
        let mut pooled = Vec::with_capacity(self.config.pooled_feature_dim());
        for (i, model) in self.config.models.iter().enumerate() {
            let own: AblationMask = mask
                .iter()
                .filter(|n| n.component == Component::PoolModel && n.model_index == i)
                .copied()
                .collect();
            match model {
                ModelSpec::Mlp(m) => {
                    let out = m.forward(i, input, &own)?;
                    pooled.extend(out.output);
                    records.extend(out.node_activations);
                }
                ModelSpec::Kmeans(k) => match k.assign(i, input, &own) {
                    Ok(a) => {
                        pooled.extend(a.one_hot);
                        records.extend(a.node_activations);
                    }
                    Err(Error::TotalAblation { .. }) => {
                        pooled.extend(std::iter::repeat_n(0.0, k.k()));
                        records.extend(k.node_ids(i).map(|id| (id, 0.0)));
                    }
                    Err(e) => return Err(e),
                },
            }
        }
        let engine_mask: AblationMask = mask
            .iter()
            .filter(|n| n.component == Component::DecisionEngine)
            .copied()
            .collect();
        let (decision, engine_nodes) = self.config.engine.readout(&pooled, &engine_mask)?;
        records.extend(engine_nodes);
        Ok(Forward { decision, records })
    }
}

/// One-shot decision: validates `config`, runs every member, and returns
/// the decision together with its full activation trace.
pub fn pool_decide(config: &PoolConfig, input: &[f64], mask: &AblationMask) -> Result<(Decision, ActivationTrace)> {
    DecisionStack::new(config.clone())?.decide(input, mask)
}
