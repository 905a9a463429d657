//! Small hand-built stacks with known behaviour, shared by tests, benches
//! and the CLI examples.

use crate::engine::EngineSpec;
use crate::kmeans::KMeansSpec;
use crate::mlp::{Activation, MlpSpec};
use crate::node::NodeId;
use crate::pool::{ModelSpec, PoolConfig};

/// First hidden unit of the XOR net (`relu(x1 + x2)`).
pub const H1: NodeId = NodeId::pool(0, 1, 0);
/// Second hidden unit of the XOR net (`relu(x1 + x2 - 1)`).
pub const H2: NodeId = NodeId::pool(0, 1, 1);
/// Output unit of the XOR net (`h1 - 2 h2`).
pub const OUT: NodeId = NodeId::pool(0, 2, 0);

/// 2-2-1 ReLU network computing XOR exactly on `{0,1}^2`.
pub fn xor_mlp() -> MlpSpec {
    MlpSpec {
        layer_sizes: vec![2, 2, 1],
        activations: vec![Activation::Relu],
        weights: vec![vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![vec![1.0, -2.0]]],
        biases: vec![vec![0.0, -1.0], vec![0.0]],
    }
}

/// Pass-through engine: class 1 scores the XOR output `y`, class 0 scores
/// zero, so the decision is `softmax(0, y)` and `y = 0` ties to class 0.
pub fn xor_engine() -> EngineSpec {
    EngineSpec {
        weights: vec![vec![0.0], vec![1.0]],
        biases: vec![0.0, 0.0],
    }
}

pub fn xor_pool() -> PoolConfig {
    PoolConfig {
        models: vec![ModelSpec::Mlp(xor_mlp())],
        engine: xor_engine(),
        seed: 0,
    }
}

/// XOR net plus a two-centroid k-means member on the same inputs. The
/// engine ignores the k-means block.
pub fn xor_kmeans_pool() -> PoolConfig {
    PoolConfig {
        models: vec![
            ModelSpec::Mlp(xor_mlp()),
            ModelSpec::Kmeans(KMeansSpec {
                centroids: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            }),
        ],
        engine: EngineSpec {
            weights: vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
            biases: vec![0.0, 0.0],
        },
        seed: 0,
    }
}

/// The four XOR points and their labels.
pub fn xor_dataset() -> (Vec<Vec<f64>>, Vec<usize>) {
    (
        vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
        vec![0, 1, 1, 0],
    )
}
