use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedSource {
    Flag,
    Plan,
    Entropy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> std::io::Result<Self> {
        let data = fs::read(path)?;
        Ok(Self { path: path.to_path_buf(), sha256: hex::encode(Sha256::digest(&data)), bytes: data.len() as u64 })
    }
}

/// Provenance record written next to every set of output files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub command: String,
    pub seed: Option<u64>,
    pub seed_source: Option<SeedSource>,
    pub versions: BTreeMap<String, String>,
    pub threads: usize,
    pub started_at: String,
    pub finished_at: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn begin(command_line: Vec<String>, command: &str, threads: usize) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("g0test".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("g0geo".to_string(), g0geo::VERSION.to_string());
        Self {
            command_line,
            command: command.to_string(),
            seed: None,
            seed_source: None,
            versions,
            threads,
            started_at: now(),
            finished_at: String::new(),
            inputs: vec![],
            outputs: vec![],
        }
    }

    pub fn finish(&mut self) {
        self.finished_at = now();
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
