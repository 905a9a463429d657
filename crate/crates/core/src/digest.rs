//! Content digests and decision ids.
//!
//! All digests are SHA-256 over a domain tag followed by little-endian
//! encodings of the content; 64-bit digests keep the first eight bytes read
//! big-endian.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::node::AblationMask;
use crate::pool::PoolConfig;

const INPUT_TAG: &[u8] = b"decstack/input/v1\0";
const CONFIG_TAG: &[u8] = b"decstack/config/v1\0";
const DECISION_TAG: &[u8] = b"decstack/decision/v1\0";

fn first_u64(bytes: &[u8]) -> u64 {
    u64::from_be_bytes(bytes[..8].try_into().expect("sha-256 output is 32 bytes"))
}

/// Hash of the exact bit patterns of `input` in order. The empty input is
/// allowed; non-finite entries are rejected.
pub fn input_digest(input: &[f64]) -> Result<u64> {
    if let Some((i, v)) = input.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Data(format!("input entry {i} is {v}")));
    }
    let mut h = Sha256::new();
    h.update(INPUT_TAG);
    h.update((input.len() as u64).to_le_bytes());
    for v in input {
        h.update(v.to_bits().to_le_bytes());
    }
    Ok(first_u64(&h.finalize()))
}

/// Hash of the compact JSON encoding of a pool configuration.
pub fn config_digest(config: &PoolConfig) -> u64 {
    let body = serde_json::to_vec(config).expect("pool configuration serializes");
    let mut h = Sha256::new();
    h.update(CONFIG_TAG);
    h.update(&body);
    first_u64(&h.finalize())
}

/// 128-bit hex id derived from the configuration, input, mask and seed.
pub fn decision_id(config_digest: u64, input_digest: u64, mask: &AblationMask, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(DECISION_TAG);
    h.update(config_digest.to_le_bytes());
    h.update(input_digest.to_le_bytes());
    h.update(seed.to_le_bytes());
    h.update((mask.len() as u64).to_le_bytes());
    for node in mask {
        h.update(node.to_string().as_bytes());
        h.update([0u8]);
    }
    to_hex(&h.finalize()[..16])
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fixed-width lowercase hex for a 64-bit digest.
pub fn hex64(v: u64) -> String {
    format!("{v:016x}")
}

pub fn parse_hex64(s: &str) -> Option<u64> {
    if s.len() != 16 {
        return None;
    }
    u64::from_str_radix(s, 16).ok()
}
