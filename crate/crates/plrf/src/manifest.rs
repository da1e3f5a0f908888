use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every set of outputs. Feeding it back as `--config`
/// reruns the same command with the same resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub version: String,
    pub timestamp: String,
    /// Paths relative to the output directory, including the manifest itself.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seeds: Vec<u64>) -> Self {
        Self {
            command: command.to_string(),
            config,
            seeds,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs: Vec::new(),
        }
    }

    /// Records outputs and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path, outputs: &[PathBuf]) -> Result<PathBuf> {
        self.outputs = outputs
            .iter()
            .map(|p| p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/"))
            .collect();
        self.outputs.push(MANIFEST_FILE.to_string());
        let path = dir.join(MANIFEST_FILE);
        crate::io::write_json(&path, &self)?;
        Ok(path)
    }
}
