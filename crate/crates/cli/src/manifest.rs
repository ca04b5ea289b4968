//! Run manifests: everything needed to reproduce an output directory.
//! Manifests carry no timestamps so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(digest_bytes(&bytes))
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    /// SHA-256 of the effective configuration below.
    pub config_digest: String,
    pub config: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, threads: usize, config: String) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            threads,
            config_digest: digest_bytes(config.as_bytes()),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    /// Records every file already written under `dir` except the manifest.
    pub fn outputs_in(&mut self, dir: &Path, names: &[&str]) -> Result<()> {
        for n in names {
            self.outputs.insert(n.to_string(), digest_file(&dir.join(n))?);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(dir.join("manifest.json"), text)?;
        Ok(())
    }
}
