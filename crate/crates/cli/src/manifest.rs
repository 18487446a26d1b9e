//! Run manifest: the frozen record that makes a run reproducible.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub command_line: Vec<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    /// input path -> sha-256
    pub inputs: BTreeMap<String, String>,
    /// effective configuration after flag/config-file/default precedence
    pub config: serde_json::Value,
    pub stages_seconds: Vec<(String, f64)>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, threads: usize) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            command_line: std::env::args().collect(),
            seed: None,
            threads,
            inputs: BTreeMap::new(),
            config: serde_json::Value::Null,
            stages_seconds: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn time_stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.stages_seconds
            .push((name.to_string(), t0.elapsed().as_secs_f64()));
        out
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let path = out_dir.join("manifest.json");
        let mut f = File::create(&path)?;
        serde_json::to_writer_pretty(&mut f, self)
            .map_err(|e| CliError::Data(format!("writing manifest: {e}")))?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut file =
        File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
