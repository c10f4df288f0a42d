use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::write_json;
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance of one command run, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub duration_secs: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the compact serialization, so formatting of the source file
/// does not matter.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, config: &T, seed: Option<u64>) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            config_hash: config_hash(config)?,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: 0.0,
        })
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    pub fn finish(mut self, elapsed: Duration, path: &Path) -> Result<()> {
        self.duration_secs = elapsed.as_secs_f64();
        write_json(path, &self)
    }
}

/// Manifest path for a single-file output: `report.json` gets
/// `report.manifest.json`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.{MANIFEST_FILE}"))
}
