//! Run configuration: a single JSON document validated before any work.
//!
//! ```json
//! {
//!   "dataset": "xor.csv",
//!   "pool": {
//!     "models": [
//!       {"type": "mlp", "hidden": [8], "learning_rate": 0.2, "epochs": 2000, "batch_size": 4},
//!       {"type": "kmeans", "k": 2}
//!     ],
//!     "engine": {"learning_rate": 1.0, "epochs": 1000}
//!   },
//!   "strategy": "top_k:0.1",
//!   "num_controls": 20,
//!   "seed": 7,
//!   "paths": {"model": "model.json", "trace_store": "traces.jsonl", "report": "report.json"}
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config
//! file. Unknown fields are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use decstack_core::train::PoolPlan;
use decstack_core::EngramStrategy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub trace_store: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub pool: Option<PoolPlan>,
    #[serde(default = "default_strategy", with = "strategy_string")]
    pub strategy: EngramStrategy,
    #[serde(default = "default_controls")]
    pub num_controls: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
}

fn default_strategy() -> EngramStrategy {
    EngramStrategy::default()
}

fn default_controls() -> usize {
    20
}

mod strategy_string {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: &EngramStrategy, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<EngramStrategy, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            pool: None,
            strategy: default_strategy(),
            num_controls: default_controls(),
            seed: 0,
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Reads and validates a config file, resolving relative paths against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let body = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_json(&body).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.paths.model);
        fix(&mut self.paths.trace_store);
        fix(&mut self.paths.report);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(pool) = &self.pool {
            if pool.models.is_empty() {
                return Err(ConfigError::Invalid("pool.models is empty".into()));
            }
        }
        Ok(())
    }
}
