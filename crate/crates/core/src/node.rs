//! Node addressing and ablation masks.
//!
//! A [`NodeId`] addresses one instrumented unit anywhere in the stack. The
//! derived ordering is lexicographic over `(component, model_index, layer,
//! unit)` with pool models before the decision engine, and it is the
//! canonical iteration and tie-break order used throughout the crate.
//!
//! Layer numbering per family:
//!
//! * MLP: `layer` is the index into `layer_sizes`, so the first hidden layer
//!   is layer 1 and the output layer is `layer_sizes.len() - 1`. Input slots
//!   (layer 0) are never nodes.
//! * k-means: every centroid lives on layer 0, `unit` = centroid index.
//! * Decision engine: `model_index` is always 0; layer 0 holds the pooled
//!   feature slots (ablatable), layer 1 the class scores (recorded only).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    PoolModel,
    DecisionEngine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub component: Component,
    pub model_index: usize,
    pub layer: usize,
    pub unit: usize,
}

/// Engine layer holding the pooled feature slots.
pub const ENGINE_FEATURE_LAYER: usize = 0;
/// Engine layer holding the class scores.
pub const ENGINE_SCORE_LAYER: usize = 1;

impl NodeId {
    pub const fn pool(model_index: usize, layer: usize, unit: usize) -> Self {
        NodeId {
            component: Component::PoolModel,
            model_index,
            layer,
            unit,
        }
    }

    pub const fn engine_slot(unit: usize) -> Self {
        NodeId {
            component: Component::DecisionEngine,
            model_index: 0,
            layer: ENGINE_FEATURE_LAYER,
            unit,
        }
    }

    pub const fn engine_score(class: usize) -> Self {
        NodeId {
            component: Component::DecisionEngine,
            model_index: 0,
            layer: ENGINE_SCORE_LAYER,
            unit: class,
        }
    }

    pub fn is_pool(&self) -> bool {
        self.component == Component::PoolModel
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.component {
            Component::PoolModel => "pool",
            Component::DecisionEngine => "engine",
        };
        write!(f, "{tag}:{}:{}:{}", self.model_index, self.layer, self.unit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseNodeIdError(String);

impl fmt::Display for ParseNodeIdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "invalid node id {:?}: expected pool:<model>:<layer>:<unit> or engine:0:<layer>:<unit>",
            self.0
        )
    }
}

impl std::error::Error for ParseNodeIdError {}

impl FromStr for NodeId {
    type Err = ParseNodeIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseNodeIdError(s.to_string());
        let mut parts = s.trim().split(':');
        let component = match parts.next() {
            Some("pool") => Component::PoolModel,
            Some("engine") => Component::DecisionEngine,
            _ => return Err(err()),
        };
        let mut next_num = || -> Result<usize, ParseNodeIdError> {
            parts.next().and_then(|p| p.parse().ok()).ok_or_else(err)
        };
        let model_index = next_num()?;
        let layer = next_num()?;
        let unit = next_num()?;
        if parts.next().is_some() {
            return Err(err());
        }
        if component == Component::DecisionEngine && model_index != 0 {
            return Err(err());
        }
        Ok(NodeId {
            component,
            model_index,
            layer,
            unit,
        })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The set of nodes to inactivate during a replay.
///
/// Serialized as a sorted array of node ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AblationMask(BTreeSet<NodeId>);

impl AblationMask {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.0.contains(node)
    }

    pub fn insert(&mut self, node: NodeId) -> bool {
        self.0.insert(node)
    }

    pub fn remove(&mut self, node: &NodeId) -> bool {
        self.0.remove(node)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Nodes in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = &NodeId> + '_ {
        self.0.iter()
    }

    pub fn as_set(&self) -> &BTreeSet<NodeId> {
        &self.0
    }
}

impl FromIterator<NodeId> for AblationMask {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> Self {
        AblationMask(iter.into_iter().collect())
    }
}

impl Extend<NodeId> for AblationMask {
    fn extend<I: IntoIterator<Item = NodeId>>(&mut self, iter: I) {
        self.0.extend(iter)
    }
}

impl From<BTreeSet<NodeId>> for AblationMask {
    fn from(set: BTreeSet<NodeId>) -> Self {
        AblationMask(set)
    }
}

impl<'a> IntoIterator for &'a AblationMask {
    type Item = &'a NodeId;
    type IntoIter = std::collections::btree_set::Iter<'a, NodeId>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
