//! Activation traces and the append-only trace store.
//!
//! On disk a store is a JSON-lines file, one trace per line:
//!
//! ```text
//! {"decision_id":"…","input_digest":"9a0ba02eb39ff64c","seed":0,
//!  "mask":["pool:0:1:0"],"records":[["pool:0:1:0",0.0],…],
//!  "decision":{"scores":[…],"label":0,"margin":0.0}}
//! ```
//!
//! Reals are written as shortest round-trip decimals and parsed back
//! exactly, so every finite value survives bit for bit.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::digest::{hex64, parse_hex64};
use crate::engine::Decision;
use crate::error::{Error, Result};
use crate::node::{AblationMask, NodeId};

/// The full per-node record of one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationTrace {
    pub decision_id: String,
    #[serde(with = "hex_u64")]
    pub input_digest: u64,
    pub seed: u64,
    #[serde(rename = "mask")]
    pub mask_applied: AblationMask,
    #[serde(with = "record_pairs")]
    pub records: BTreeMap<NodeId, f64>,
    pub decision: Decision,
}

impl ActivationTrace {
    /// Single-line JSON encoding used by the store.
    pub fn to_json_line(&self) -> Result<String> {
        if let Some((id, v)) = self.records.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!("record {id} is {v}; traces hold finite values only")));
        }
        if self.decision.scores.iter().any(|v| !v.is_finite()) || !self.decision.margin.is_finite() {
            return Err(Error::Data("decision holds a non-finite value".into()));
        }
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }

    pub fn activation(&self, node: &NodeId) -> Option<f64> {
        self.records.get(node).copied()
    }
}

mod hex_u64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&hex64(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        parse_hex64(&s).ok_or_else(|| serde::de::Error::custom(format!("invalid 64-bit hex digest {s:?}")))
    }
}

pub(crate) mod record_pairs {
    use super::*;

    pub fn serialize<S: Serializer>(m: &BTreeMap<NodeId, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<NodeId, f64>, D::Error> {
        let pairs = Vec::<(NodeId, f64)>::deserialize(d)?;
        let mut out = BTreeMap::new();
        for (id, v) in pairs {
            if out.insert(id, v).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate record for {id}")));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceFilter {
    All,
    DecisionId(String),
    InputDigest(u64),
}

impl TraceFilter {
    fn matches(&self, t: &ActivationTrace) -> bool {
        match self {
            TraceFilter::All => true,
            TraceFilter::DecisionId(id) => &t.decision_id == id,
            TraceFilter::InputDigest(d) => t.input_digest == *d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Persisted {
    Appended,
    /// The identical trace was already stored.
    AlreadyPresent,
}

/// Append-only storage of traces keyed by decision id.
pub trait TraceStore {
    fn persist(&mut self, trace: &ActivationTrace) -> Result<Persisted>;

    /// Matching traces in insertion order.
    fn load(&self, filter: &TraceFilter) -> Result<Vec<ActivationTrace>>;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shared in-memory log: encoded line, decoded trace, and id index.
#[derive(Debug, Default)]
struct TraceLog {
    entries: Vec<(String, ActivationTrace)>,
    index: HashMap<String, usize>,
}

impl TraceLog {
    /// `Ok(false)` when the identical line is already present.
    fn admit(&mut self, line: String, trace: ActivationTrace) -> Result<bool> {
        if let Some(&i) = self.index.get(&trace.decision_id) {
            return if self.entries[i].0 == line {
                Ok(false)
            } else {
                Err(Error::Integrity(trace.decision_id))
            };
        }
        self.index.insert(trace.decision_id.clone(), self.entries.len());
        self.entries.push((line, trace));
        Ok(true)
    }

    fn rollback_last(&mut self) {
        if let Some((_, t)) = self.entries.pop() {
            self.index.remove(&t.decision_id);
        }
    }

    fn load(&self, filter: &TraceFilter) -> Vec<ActivationTrace> {
        if let TraceFilter::DecisionId(id) = filter {
            return self.index.get(id).map(|&i| self.entries[i].1.clone()).into_iter().collect();
        }
        self.entries
            .iter()
            .filter(|(_, t)| filter.matches(t))
            .map(|(_, t)| t.clone())
            .collect()
    }
}

#[derive(Debug, Default)]
pub struct MemoryTraceStore {
    log: TraceLog,
}

impl MemoryTraceStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl TraceStore for MemoryTraceStore {
    fn persist(&mut self, trace: &ActivationTrace) -> Result<Persisted> {
        let line = trace.to_json_line()?;
        Ok(if self.log.admit(line, trace.clone())? {
            Persisted::Appended
        } else {
            Persisted::AlreadyPresent
        })
    }

    fn load(&self, filter: &TraceFilter) -> Result<Vec<ActivationTrace>> {
        Ok(self.log.load(filter))
    }

    fn len(&self) -> usize {
        self.log.entries.len()
    }
}

/// A JSON-lines file store. Opening reads the whole file; each persist
/// appends one line and flushes. A single writer is assumed.
#[derive(Debug)]
pub struct JsonlTraceStore {
    path: PathBuf,
    log: TraceLog,
}

impl JsonlTraceStore {
    /// Opens `path`, creating nothing until the first append. A missing
    /// file is an empty store.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut log = TraceLog::default();
        match File::open(&path) {
            Ok(file) => {
                for (n, line) in BufReader::new(file).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let trace = ActivationTrace::from_json_line(&line).map_err(|e| {
                        Error::Storage(io::Error::new(
                            io::ErrorKind::InvalidData,
                            format!("{}: line {}: {e}", path.display(), n + 1),
                        ))
                    })?;
                    log.admit(line, trace)?;
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Ok(JsonlTraceStore { path, log })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl TraceStore for JsonlTraceStore {
    fn persist(&mut self, trace: &ActivationTrace) -> Result<Persisted> {
        let line = trace.to_json_line()?;
        if !self.log.admit(line.clone(), trace.clone())? {
            return Ok(Persisted::AlreadyPresent);
        }
        if let Err(e) = append_line(&self.path, &line) {
            // keep the in-memory view consistent with the file
            self.log.rollback_last();
            return Err(e.into());
        }
        Ok(Persisted::Appended)
    }

    fn load(&self, filter: &TraceFilter) -> Result<Vec<ActivationTrace>> {
        Ok(self.log.load(filter))
    }

    fn len(&self) -> usize {
        self.log.entries.len()
    }
}

fn append_line(path: &Path, line: &str) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(file, "{line}")?;
    file.flush()
}
