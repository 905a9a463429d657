//! Fitting a whole pool plus its decision engine from one labelled dataset.

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::engine::{engine_train, EngineTrainParams};
use crate::error::{Error, Result};
use crate::kmeans::kmeans_fit;
use crate::mlp::{mlp_train, Activation, TrainParams};
use crate::node::AblationMask;
use crate::pool::{ModelSpec, PoolConfig};
use crate::rng;

/// How to build one pool member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MemberPlan {
    /// Classifier MLP `input -> hidden... -> num_classes`.
    Mlp {
        #[serde(default)]
        hidden: Vec<usize>,
        #[serde(default = "default_activation")]
        activation: Activation,
        #[serde(default = "default_lr")]
        learning_rate: f64,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_batch")]
        batch_size: usize,
    },
    Kmeans {
        k: usize,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
    },
}

fn default_activation() -> Activation {
    Activation::Relu
}
fn default_lr() -> f64 {
    0.1
}
fn default_epochs() -> usize {
    500
}
fn default_batch() -> usize {
    16
}
fn default_max_iters() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolPlan {
    pub models: Vec<MemberPlan>,
    #[serde(default)]
    pub engine: EngineTrainParams,
}

/// Trains every member in order, then fits the engine on the unablated
/// pooled features. Member `i` is seeded from stream `2 + i` of `seed`,
/// the engine from stream 1.
pub fn train_pool(features: &[Vec<f64>], labels: &[usize], plan: &PoolPlan, seed: u64) -> Result<PoolConfig> {
    if plan.models.is_empty() {
        return Err(Error::Config("pool plan lists no models".into()));
    }
    let Some(first) = features.first() else {
        return Err(Error::Data("empty dataset".into()));
    };
    let dim = first.len();
    if features.iter().any(|x| x.len() != dim) {
        return Err(Error::Data("feature rows have different lengths".into()));
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1).max(2);

    let mut models = Vec::with_capacity(plan.models.len());
    for (i, member) in plan.models.iter().enumerate() {
        let member_seed = rng::seeded(seed, rng::model_stream(i)).next_u64();
        let spec = match member {
            MemberPlan::Mlp {
                hidden,
                activation,
                learning_rate,
                epochs,
                batch_size,
            } => {
                let mut sizes = vec![dim];
                sizes.extend(hidden);
                sizes.push(num_classes);
                let params = TrainParams {
                    learning_rate: *learning_rate,
                    epochs: *epochs,
                    batch_size: *batch_size,
                    activation: *activation,
                };
                ModelSpec::Mlp(mlp_train(&sizes, features, labels, &params, member_seed)?)
            }
            MemberPlan::Kmeans { k, max_iters } => ModelSpec::Kmeans(kmeans_fit(features, *k, member_seed, *max_iters)?),
        };
        models.push(spec);
    }

    let empty = AblationMask::empty();
    let pooled = features
        .iter()
        .map(|x| {
            let mut row = Vec::new();
            for (i, m) in models.iter().enumerate() {
                match m {
                    ModelSpec::Mlp(net) => row.extend(net.forward(i, x, &empty)?.output),
                    ModelSpec::Kmeans(km) => row.extend(km.assign(i, x, &empty)?.one_hot),
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let engine = engine_train(&pooled, labels, num_classes, &plan.engine, seed)?;

    let config = PoolConfig { models, engine, seed };
    config.validate()?;
    Ok(config)
}
