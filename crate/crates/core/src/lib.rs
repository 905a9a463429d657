//! A layered decision stack whose decisions can be explained by ablation.
//!
//! The stack has three levels:
//!
//! * a pool of from-scratch models ([`mlp`], [`kmeans`]) that all read the
//!   same feature vector,
//! * an instrumentation layer ([`registry`], [`trace`]) that records the
//!   activation of every node for every decision and persists it,
//! * a decision engine ([`engine`]) reading out the pooled model outputs.
//!
//! [`explain`] extracts the engram (active node set) of a decision from its
//! trace and replays the decision with those nodes inactivated. A changed
//! label shows that the decision depends causally on the engram.
//!
//! All computation is deterministic: identical configuration, input, mask
//! and seed give bitwise identical decisions, traces and reports.

pub mod digest;
pub mod engine;
pub mod error;
pub mod explain;
pub mod fixtures;
pub mod kmeans;
pub mod mlp;
pub mod model_file;
pub mod node;
pub mod pool;
pub mod registry;
pub mod rng;
pub mod trace;
pub mod train;

pub use engine::{Decision, EngineSpec};
pub use error::{Error, Result};
pub use explain::{
    causal_test, extract_engram, greedy_shrink, minimal_flip_subset_exhaustive, Engram, EngramStrategy,
    ExplanationReport, Verdict,
};
pub use kmeans::{kmeans_fit, KMeansSpec};
pub use mlp::{mlp_train, Activation, MlpSpec};
pub use node::{AblationMask, NodeId};
pub use pool::{pool_decide, DecisionStack, ModelSpec, PoolConfig};
pub use registry::{register_nodes, NodeRegistry};
pub use trace::{ActivationTrace, JsonlTraceStore, MemoryTraceStore, TraceFilter, TraceStore};
