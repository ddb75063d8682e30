use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Written once per output directory. Records everything needed to rerun
/// the command.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub seed: u64,
    /// Covers the command, seed, configuration and input contents.
    pub config_digest: String,
    pub config: Value,
    pub inputs: BTreeMap<String, InputRecord>,
    pub outputs: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

/// RFC 3339 time, pinned by `SOURCE_DATE_EPOCH` when set.
pub fn timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .and_then(|s| chrono::DateTime::from_timestamp(s, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file, or of every file under a directory (sorted relative
/// paths and contents).
pub fn path_digest(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        let mut h = Sha256::new();
        for rel in files {
            let bytes = std::fs::read(path.join(&rel)).with_context(|| format!("reading {}", path.join(&rel).display()))?;
            h.update((rel.len() as u64).to_le_bytes());
            h.update(rel.as_bytes());
            h.update(sha256_hex(&bytes).as_bytes());
        }
        Ok(hex::encode(h.finalize()))
    } else {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(sha256_hex(&bytes))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).unwrap_or(&p);
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

pub struct ManifestBuilder {
    command: String,
    seed: u64,
    config: Value,
    inputs: BTreeMap<String, InputRecord>,
    started_at: String,
}

impl ManifestBuilder {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            started_at: timestamp(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        let sha256 = path_digest(path)?;
        self.inputs.insert(
            name.to_string(),
            InputRecord {
                path: path.display().to_string(),
                sha256,
            },
        );
        Ok(())
    }

    pub fn finish(self, outputs: Vec<String>) -> RunManifest {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        h.update(self.seed.to_le_bytes());
        h.update(serde_json::to_string(&self.config).expect("config serializes").as_bytes());
        for (name, rec) in &self.inputs {
            h.update(name.as_bytes());
            h.update(rec.sha256.as_bytes());
        }
        RunManifest {
            command: self.command,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config_digest: hex::encode(h.finalize()),
            config: self.config,
            inputs: self.inputs,
            outputs,
            started_at: self.started_at,
            finished_at: timestamp(),
        }
    }
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest)? + "\n";
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
