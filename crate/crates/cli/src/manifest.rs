//! Atomic artifact writes and the per-command run manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub build_id: String,
    pub seeds: BTreeMap<String, u64>,
    pub started_at: String,
    pub finished_at: String,
    pub status: String,
    pub failure: Option<serde_json::Value>,
    pub artifacts: Vec<Artifact>,
}

pub fn build_id() -> String {
    match option_env!("BRM_BUILD_ID") {
        Some(id) => format!("brm-cli {} ({id})", env!("CARGO_PKG_VERSION")),
        None => format!("brm-cli {}", env!("CARGO_PKG_VERSION")),
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Collects artifacts written by one command and emits `<command>.manifest.json`.
pub struct Recorder {
    dir: PathBuf,
    command: String,
    config_hash: String,
    seeds: BTreeMap<String, u64>,
    started_at: String,
    artifacts: Vec<Artifact>,
}

impl Recorder {
    pub fn new(dir: &Path, command: &str, config_hash: String) -> Self {
        Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config_hash,
            seeds: BTreeMap::new(),
            started_at: now(),
            artifacts: Vec::new(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn finish(
        self,
        status: &str,
        failure: Option<serde_json::Value>,
    ) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            command: self.command.clone(),
            config_hash: self.config_hash,
            build_id: build_id(),
            seeds: self.seeds,
            started_at: self.started_at,
            finished_at: now(),
            status: status.to_string(),
            failure,
            artifacts: self.artifacts,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(
            &self.dir.join(format!("{}.manifest.json", self.command)),
            &bytes,
        )?;
        Ok(manifest)
    }
}
