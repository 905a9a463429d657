#![allow(dead_code)]

use decstack_core::engine::EngineSpec;
use decstack_core::kmeans::KMeansSpec;
use decstack_core::mlp::{Activation, MlpSpec};
use decstack_core::{ModelSpec, PoolConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_vec(r: &mut StdRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-scale..scale)).collect()
}

pub fn random_matrix(r: &mut StdRng, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows).map(|_| random_vec(r, cols, scale)).collect()
}

/// Random MLP with the given sizes; hidden activations drawn per layer.
pub fn random_mlp(r: &mut StdRng, sizes: &[usize]) -> MlpSpec {
    let activations = (0..sizes.len() - 2)
        .map(|_| if r.gen_bool(0.7) { Activation::Relu } else { Activation::Identity })
        .collect();
    let weights = sizes.windows(2).map(|w| random_matrix(r, w[1], w[0], 1.0)).collect();
    let biases = sizes[1..].iter().map(|&n| random_vec(r, n, 0.5)).collect();
    MlpSpec {
        layer_sizes: sizes.to_vec(),
        activations,
        weights,
        biases,
    }
}

/// A pool of one random MLP, optionally a random k-means member, and a
/// random engine.
pub fn random_pool(r: &mut StdRng, dim: usize, hidden: &[usize], classes: usize, k: Option<usize>) -> PoolConfig {
    let mut sizes = vec![dim];
    sizes.extend_from_slice(hidden);
    sizes.push(classes);
    let mut models = vec![ModelSpec::Mlp(random_mlp(r, &sizes))];
    if let Some(k) = k {
        models.push(ModelSpec::Kmeans(KMeansSpec {
            centroids: random_matrix(r, k, dim, 1.0),
        }));
    }
    let width = classes + k.unwrap_or(0);
    let engine = EngineSpec {
        weights: random_matrix(r, classes, width, 2.0),
        biases: random_vec(r, classes, 1.0),
    };
    PoolConfig {
        models,
        engine,
        seed: r.gen(),
    }
}
