//! Run manifests: one per invocation, never overwritten.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Limits, Result};

pub const RESULTS_DIR: &str = "results";
pub const TABLES_DIR: &str = "tables";
pub const MANIFESTS_DIR: &str = "manifests";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunState {
    Completed,
    /// Ran to the end but a check or verdict failed.
    Violation,
    /// Stopped early; outputs hold whatever finished.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub id: String,
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub software_version: String,
    pub started_unix: f64,
    pub wall_time: f64,
    pub workers: usize,
    pub budgets: Limits,
    pub state: RunState,
    pub message: Option<String>,
    pub outputs: Vec<OutputDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Creates the output layout and picks an id unused by any existing file.
pub fn allocate_run(out: &Path, subcommand: &str) -> Result<String> {
    for d in [RESULTS_DIR, TABLES_DIR, MANIFESTS_DIR] {
        std::fs::create_dir_all(out.join(d))?;
    }
    let millis = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let base = format!("{subcommand}-{millis}-{}", std::process::id());
    for k in 0u32.. {
        let id = if k == 0 {
            base.clone()
        } else {
            format!("{base}-{k}")
        };
        let taken = [
            out.join(RESULTS_DIR).join(format!("{id}.json")),
            out.join(TABLES_DIR).join(format!("{id}.csv")),
            out.join(MANIFESTS_DIR).join(format!("{id}.json")),
        ]
        .iter()
        .any(|p| p.exists());
        if !taken {
            return Ok(id);
        }
    }
    unreachable!()
}

impl RunManifest {
    /// Records the digest of an output written under `out`.
    pub fn add_output(&mut self, out: &Path, rel: &Path) -> Result<()> {
        let sha256 = sha256_file(&out.join(rel))?;
        self.outputs.push(OutputDigest {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256,
        });
        Ok(())
    }

    pub fn path(&self, out: &Path) -> PathBuf {
        out.join(MANIFESTS_DIR).join(format!("{}.json", self.id))
    }

    /// Writes the manifest; fails rather than replace an existing one.
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = self.path(out);
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    LabError::invalid(format!("manifest {} already exists", path.display()))
                } else {
                    e.into()
                }
            })?;
        let mut text = serde_json::to_string_pretty(self).map_err(|e| LabError::Io(e.into()))?;
        text.push('\n');
        f.write_all(text.as_bytes())?;
        Ok(path)
    }
}
