//! Output directories, hashes and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use gpmro::domain::Normalization;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `config.json` into `out` and returns its hash.
pub fn write_config(out: &Path, config: &ExperimentConfig) -> anyhow::Result<String> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let text = config.canonical_json();
    fs::write(out.join("config.json"), &text)?;
    Ok(sha256_hex(text.as_bytes()))
}

pub fn create_file(path: &Path) -> anyhow::Result<fs::File> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

/// Path of `path` relative to `out`, with forward slashes.
pub fn relative(out: &Path, path: &Path) -> String {
    path.strip_prefix(out)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_performance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queries: Option<usize>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRecord {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_upper_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pure_maximin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything needed to trace a result directory back to its inputs. It
/// holds no timestamps, so identical runs give identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    /// Version shared by the workspace crates.
    pub version: String,
    pub config_file: String,
    pub config_hash: String,
    pub seeds: Vec<SeedRecord>,
    pub runs: Vec<RunRecord>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: String) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_file: "config.json".into(),
            config_hash,
            seeds: Vec::new(),
            runs: Vec::new(),
        }
    }

    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(|r| r.ok) && self.seeds.iter().all(|s| s.error.is_none())
    }

    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| !r.ok).count()
    }

    pub fn write(&self, out: &Path) -> anyhow::Result<PathBuf> {
        let path = out.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}
