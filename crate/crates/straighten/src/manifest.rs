//! Run manifests: enough provenance to reproduce an output directory.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats::{write_json, MANIFEST_JSON};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub seed: u64,
    /// Model labels and content hashes (`untrained:<preset>:<seed>` for random init).
    pub models: Vec<FileHash>,
    pub corpus: Option<FileHash>,
    pub outputs: Vec<FileHash>,
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize, seed: u64) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?;
        let canonical = serde_json::to_vec(&config).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: sha256_hex(&canonical),
            config,
            seed,
            models: Vec::new(),
            corpus: None,
            outputs: Vec::new(),
        })
    }

    /// Hashes the named files under `out` and writes `manifest.json` there.
    pub fn finish(mut self, out: &Path, outputs: &[&str]) -> Result<Self> {
        for name in outputs {
            self.outputs.push(FileHash { path: (*name).into(), sha256: sha256_file(&out.join(name))? });
        }
        write_json(&out.join(MANIFEST_JSON), &self)?;
        Ok(self)
    }
}
