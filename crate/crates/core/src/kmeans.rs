//! k-means clustering (Lloyd's algorithm) and nearest-centroid assignment
//! with centroid ablation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::node::{AblationMask, NodeId};
use crate::rng;

/// A fitted clustering. Each centroid is one instrumented node on layer 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansSpec {
    pub centroids: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub one_hot: Vec<f64>,
    pub winner: usize,
    pub node_activations: BTreeMap<NodeId, f64>,
}

/// Result of running Lloyd iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydOutcome {
    pub spec: KMeansSpec,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia_history: Vec<f64>,
}

impl KMeansSpec {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centroids.is_empty() {
            return Err(Error::Config("k-means needs at least one centroid".into()));
        }
        let dim = self.dim();
        if dim == 0 || self.centroids.iter().any(|c| c.len() != dim) {
            return Err(Error::Config("k-means centroids must share a non-zero dimension".into()));
        }
        if self.centroids.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("k-means centroids must be finite".into()));
        }
        Ok(())
    }

    pub fn node_ids(&self, model_index: usize) -> impl Iterator<Item = NodeId> {
        (0..self.k()).map(move |u| NodeId::pool(model_index, 0, u))
    }

    /// Nearest non-masked centroid by squared Euclidean distance, lowest
    /// index on ties. Masked centroids are excluded from the competition and
    /// recorded as 0.
    pub fn assign(&self, model_index: usize, input: &[f64], mask: &AblationMask) -> Result<Assignment> {
        if input.len() != self.dim() {
            return Err(Error::Config(format!(
                "k-means {model_index} expects {} inputs, got {}",
                self.dim(),
                input.len()
            )));
        }
        if let Some(bad) = mask
            .iter()
            .find(|n| !(n.is_pool() && n.model_index == model_index && n.layer == 0 && n.unit < self.k()))
        {
            return Err(Error::foreign_node(*bad, &format!("k-means {model_index}")));
        }
        let winner = nearest(&self.centroids, input, |j| !mask.contains(&NodeId::pool(model_index, 0, j)))
            .ok_or(Error::TotalAblation {
                model_index,
                k: self.k(),
            })?;
        let mut one_hot = vec![0.0; self.k()];
        one_hot[winner] = 1.0;
        let node_activations = one_hot
            .iter()
            .enumerate()
            .map(|(j, &v)| (NodeId::pool(model_index, 0, j), v))
            .collect();
        Ok(Assignment {
            one_hot,
            winner,
            node_activations,
        })
    }
}

/// Fits `k` centroids with Lloyd's algorithm.
///
/// Initial centroids are `k` distinct points sampled with the seed. When the
/// data has fewer than `k` distinct points, all distinct points are used and
/// the remaining slots repeat them in first-occurrence order.
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<KMeansSpec> {
    check_points(points, k)?;
    let init = initial_centroids(points, k, seed);
    Ok(lloyd(points, init, max_iters)?.spec)
}

/// Runs Lloyd iterations from the given centroids. Stops after `max_iters`
/// assignment steps or as soon as assignments stop changing. An empty
/// cluster keeps its previous centroid.
pub fn lloyd(points: &[Vec<f64>], init: Vec<Vec<f64>>, max_iters: usize) -> Result<LloydOutcome> {
    check_points(points, init.len())?;
    let dim = points[0].len();
    if init.iter().any(|c| c.len() != dim) {
        return Err(Error::Config("initial centroids must match the point dimension".into()));
    }
    let mut centroids = init;
    let mut assignments: Vec<usize> = Vec::new();
    let mut inertia_history = Vec::new();
    let mut iterations = 0;

    while iterations < max_iters {
        let next: Vec<usize> = points
            .iter()
            .map(|p| nearest(&centroids, p, |_| true).expect("k >= 1"))
            .collect();
        iterations += 1;
        inertia_history.push(inertia(points, &centroids, &next));
        if next == assignments {
            break;
        }
        assignments = next;

        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for ((centroid, sum), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *centroid = sum.into_iter().map(|s| s / n as f64).collect();
            }
        }
    }

    if assignments.is_empty() {
        assignments = points
            .iter()
            .map(|p| nearest(&centroids, p, |_| true).expect("k >= 1"))
            .collect();
    }
    Ok(LloydOutcome {
        spec: KMeansSpec { centroids },
        assignments,
        iterations,
        inertia_history,
    })
}

/// Within-cluster sum of squared distances.
pub fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &c)| squared_distance(p, &centroids[c]))
        .sum()
}

fn initial_centroids(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.iter().any(|d| same_bits(d, p)) {
            distinct.push(p);
        }
    }
    if distinct.len() <= k {
        return distinct.iter().cycle().take(k).map(|p| (*p).clone()).collect();
    }
    let mut rng = rng::seeded(seed, 0);
    rng::sample_distinct(&mut rng, distinct.len(), k)
        .into_iter()
        .map(|i| distinct[i].clone())
        .collect()
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let Some(first) = points.first() else {
        return Err(Error::Argument("k-means needs at least one point".into()));
    };
    if first.is_empty() || points.iter().any(|p| p.len() != first.len()) {
        return Err(Error::Data("points must share a non-zero dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("points must be finite".into()));
    }
    Ok(())
}

fn nearest(centroids: &[Vec<f64>], p: &[f64], eligible: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, c) in centroids.iter().enumerate() {
        if !eligible(j) {
            continue;
        }
        let d = squared_distance(p, c);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best.map(|(j, _)| j)
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}
