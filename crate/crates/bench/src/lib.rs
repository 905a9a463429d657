//! Workloads shared by the criterion benches.

use decstack_core::engine::EngineSpec;
use decstack_core::kmeans::KMeansSpec;
use decstack_core::mlp::{Activation, MlpSpec};
use decstack_core::rng;
use decstack_core::{ModelSpec, PoolConfig};

/// A pool of one `dim-hidden-classes` MLP and one k-means member with
/// seeded random parameters and a random engine.
pub fn random_pool(dim: usize, hidden: usize, k: usize, classes: usize, seed: u64) -> PoolConfig {
    let mlp = MlpSpec::seeded_init(&[dim, hidden, classes], Activation::Relu, seed).expect("valid sizes");
    let mut r = rng::seeded(seed, 99);
    let centroids = (0..k)
        .map(|_| (0..dim).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect())
        .collect();
    let width = classes + k;
    let engine = EngineSpec {
        weights: (0..classes)
            .map(|_| (0..width).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect())
            .collect(),
        biases: vec![0.0; classes],
    };
    PoolConfig {
        models: vec![ModelSpec::Mlp(mlp), ModelSpec::Kmeans(KMeansSpec { centroids })],
        engine,
        seed,
    }
}

pub fn random_input(dim: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed, 100);
    (0..dim).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect()
}
