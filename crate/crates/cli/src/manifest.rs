use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Record of one run: what went in, what came out, and how to repeat it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Arguments after the program name; rerunning them reproduces the
    /// artifacts bit for bit.
    pub command: Vec<String>,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of every input; a directory hashes its sorted file list.
    pub inputs: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            tool: "hctc".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: std::env::args().skip(1).collect(),
            config,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs
            .insert(path.display().to_string(), hash_path(path)?);
        Ok(())
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}

pub fn hash_path(path: &Path) -> Result<String, CliError> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for f in files {
            h.update(
                f.file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .as_bytes(),
            );
            h.update([0]);
            h.update(std::fs::read(&f).map_err(|e| CliError::io(&f, e))?);
        }
    } else {
        h.update(std::fs::read(path).map_err(|e| CliError::io(path, e))?);
    }
    let mut out = String::with_capacity(64);
    for b in h.finalize() {
        let _ = write!(out, "{b:02x}");
    }
    Ok(out)
}

/// `<artifact>.manifest.json` next to the artifact.
pub fn manifest_path_for(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}
