//! Canonical registry of every instrumented node in a pool configuration.

use crate::error::Result;
use crate::node::{NodeId, ENGINE_FEATURE_LAYER};
use crate::pool::{ModelSpec, PoolConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeFamily {
    Mlp,
    KMeans,
    EngineSlot,
    EngineScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeInfo {
    pub id: NodeId,
    pub family: NodeFamily,
    pub ablatable: bool,
}

/// All nodes of a configuration, sorted in canonical order without
/// duplicates. Engine score nodes are recorded but not ablatable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRegistry {
    nodes: Vec<NodeInfo>,
}

/// Enumerates every MLP hidden/output unit, every centroid, every engine
/// feature slot and every engine score node.
pub fn register_nodes(config: &PoolConfig) -> Result<NodeRegistry> {
    config.validate()?;
    let mut nodes = Vec::new();
    for (i, model) in config.models.iter().enumerate() {
        match model {
            ModelSpec::Mlp(m) => nodes.extend(m.node_ids(i).map(|id| NodeInfo {
                id,
                family: NodeFamily::Mlp,
                ablatable: true,
            })),
            ModelSpec::Kmeans(k) => nodes.extend(k.node_ids(i).map(|id| NodeInfo {
                id,
                family: NodeFamily::KMeans,
                ablatable: true,
            })),
        }
    }
    nodes.extend((0..config.engine.feature_dim()).map(|j| NodeInfo {
        id: NodeId::engine_slot(j),
        family: NodeFamily::EngineSlot,
        ablatable: true,
    }));
    nodes.extend((0..config.engine.num_classes()).map(|c| NodeInfo {
        id: NodeId::engine_score(c),
        family: NodeFamily::EngineScore,
        ablatable: false,
    }));
    debug_assert!(nodes.windows(2).all(|w| w[0].id < w[1].id));
    Ok(NodeRegistry { nodes })
}

impl NodeRegistry {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodeInfo> + '_ {
        self.nodes.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn get(&self, id: &NodeId) -> Option<&NodeInfo> {
        self.nodes
            .binary_search_by(|n| n.id.cmp(id))
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.get(id).is_some()
    }

    pub fn is_ablatable(&self, id: &NodeId) -> bool {
        self.get(id).is_some_and(|n| n.ablatable)
    }

    /// Ablatable nodes in canonical order.
    pub fn ablatable(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.ablatable).map(|n| n.id)
    }

    /// Ablatable nodes grouped per pool model, then the engine feature
    /// slots as a final group. Groups and their members are in canonical
    /// order.
    pub fn populations(&self) -> Vec<Vec<NodeId>> {
        let mut groups: Vec<Vec<NodeId>> = Vec::new();
        let mut current_key = None;
        for id in self.ablatable() {
            let key = if id.is_pool() {
                (0, id.model_index)
            } else {
                debug_assert_eq!(id.layer, ENGINE_FEATURE_LAYER);
                (1, 0)
            };
            if current_key != Some(key) {
                groups.push(Vec::new());
                current_key = Some(key);
            }
            groups.last_mut().expect("group pushed").push(id);
        }
        groups
    }
}
