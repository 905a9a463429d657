//! Versioned JSON document for a pool configuration.
//!
//! ```text
//! {"format_version":1,"seed":0,
//!  "models":[{"type":"mlp","layer_sizes":[2,2,1],"activations":["relu"],
//!             "weights":[[[1.0,1.0],[1.0,1.0]],[[1.0,-2.0]]],"biases":[[0.0,-1.0],[0.0]]},
//!            {"type":"kmeans","centroids":[[0.0,0.0],[1.0,1.0]]}],
//!  "engine":{"weights":[[0.0,0.0,0.0],[1.0,0.0,0.0]],"biases":[0.0,0.0]}}
//! ```
//!
//! Weights are written as shortest round-trip decimals, so a save/load
//! cycle reproduces every finite double exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::EngineSpec;
use crate::error::{Error, Result};
use crate::pool::{ModelSpec, PoolConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct DocumentRef<'a> {
    format_version: u32,
    seed: u64,
    models: &'a [ModelSpec],
    engine: &'a EngineSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u32,
    seed: u64,
    models: Vec<ModelSpec>,
    engine: EngineSpec,
}

pub fn to_json(config: &PoolConfig) -> Result<String> {
    let doc = DocumentRef {
        format_version: FORMAT_VERSION,
        seed: config.seed,
        models: &config.models,
        engine: &config.engine,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parses and validates a model document.
pub fn from_json(s: &str) -> Result<PoolConfig> {
    let doc: Document = serde_json::from_str(s).map_err(|e| Error::Config(format!("model document: {e}")))?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            doc.format_version
        )));
    }
    let config = PoolConfig {
        models: doc.models,
        engine: doc.engine,
        seed: doc.seed,
    };
    config.validate()?;
    Ok(config)
}

pub fn save(config: &PoolConfig, path: impl AsRef<Path>) -> Result<()> {
    let mut body = to_json(config)?;
    body.push('\n');
    fs::write(path, body)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<PoolConfig> {
    from_json(&fs::read_to_string(path)?)
}
