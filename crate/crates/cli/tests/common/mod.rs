#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use decstack_core::{fixtures, model_file};

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Output {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", self.stdout))
    }
}

pub fn run(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("decstack").chain(args.iter().copied());
    let code = decstack_cli::run_cli(argv, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

/// Writes the hand-built XOR pool and a config pointing at it into `dir`.
pub fn xor_workspace(dir: &Path) -> PathBuf {
    model_file::save(&fixtures::xor_pool(), dir.join("model.json")).unwrap();
    let config = dir.join("run.json");
    fs::write(
        &config,
        r#"{"seed": 3, "num_controls": 8,
            "paths": {"model": "model.json", "trace_store": "traces.jsonl", "report": "report.json"}}"#,
    )
    .unwrap();
    config
}

pub const XOR_CSV: &str = "x1,x2,label\n0,0,0\n0,1,1\n1,0,1\n1,1,0\n";
