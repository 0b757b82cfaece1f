//! Run manifest: the single source of truth about what a run has produced.
//!
//! Every output file is written through [`write_output`], which records its
//! SHA-256 alongside the relative path, so the manifest's inventory is
//! complete by construction. Stages mark themselves done only after all
//! their files are on disk; a rerun consults those markers and skips work
//! whose configuration hash still matches. The manifest itself is saved
//! atomically (temp file + rename) after every stage so a crash leaves a
//! consistent partial record rather than a torn one.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tsforge_core::{Error, Result};

use crate::config::hex_string;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// One isolated task failure: the pipeline records it and keeps going.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub stage: String,
    pub series: String,
    pub model: String,
    pub horizon: usize,
    pub detail: String,
}

/// Persistent record of a run: configuration hash, completed stages, file
/// inventory with checksums, and isolated task failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_hash: String,
    /// Stage names that ran to completion, in execution order.
    pub stages: Vec<String>,
    /// Relative path -> SHA-256 of every file the run wrote.
    pub files: BTreeMap<String, String>,
    pub failures: Vec<TaskFailure>,
}

impl RunManifest {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            config_hash: config_hash.into(),
            stages: Vec::new(),
            files: BTreeMap::new(),
            failures: Vec::new(),
        }
    }

    pub fn stage_complete(&self, stage: &str) -> bool {
        self.stages.iter().any(|s| s == stage)
    }

    pub fn mark_stage(&mut self, stage: &str) {
        if !self.stage_complete(stage) {
            self.stages.push(stage.to_string());
        }
    }

    /// Forgets a stage's completion marker and its recorded failures, ahead
    /// of recomputing it.
    pub fn clear_stage(&mut self, stage: &str) {
        self.stages.retain(|s| s != stage);
        self.failures.retain(|f| f.stage != stage);
    }

    /// Relative paths recorded under a directory prefix.
    pub fn files_under(&self, prefix: &str) -> Vec<String> {
        self.files
            .keys()
            .filter(|p| p.starts_with(prefix))
            .cloned()
            .collect()
    }

    /// Parses the manifest in `dir` if one exists.
    pub fn load(dir: &Path) -> Result<Option<RunManifest>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Ok(None);
        }
        let raw = fs::read_to_string(&path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let manifest: RunManifest = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            row: e.line(),
            column: e.column(),
            detail: format!("manifest '{}': {e}", path.display()),
        })?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::invalid_config(format!(
                "manifest schema_version {} unsupported (expected {MANIFEST_SCHEMA_VERSION}); \
                 delete '{}' to start over",
                manifest.schema_version,
                path.display()
            )));
        }
        Ok(Some(manifest))
    }

    /// Writes the manifest atomically into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let path = dir.join(MANIFEST_FILE);
        fs::write(&tmp, &bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(())
    }

    /// Verifies that every inventory entry exists on disk with the recorded
    /// checksum; returns the relative paths that do not.
    pub fn verify_files(&self, dir: &Path) -> Vec<String> {
        let mut bad = Vec::new();
        for (rel, expected) in &self.files {
            match fs::read(dir.join(rel)) {
                Ok(bytes) if &sha256_hex(&bytes) == expected => {}
                _ => bad.push(rel.clone()),
            }
        }
        bad
    }

    /// Removes every recorded file from `dir` (best effort) and resets the
    /// manifest for the given configuration hash. Used when the hash no
    /// longer matches: stale outputs must not shadow the new run's.
    pub fn reset_for(&mut self, dir: &Path, config_hash: &str) {
        for rel in self.files.keys() {
            let _ = fs::remove_file(dir.join(rel));
        }
        *self = RunManifest::new(config_hash);
    }
}

/// SHA-256 of a byte slice as lower-case hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

/// Writes one output file under `dir/rel`, creating parent directories, and
/// records its checksum in the manifest. All pipeline output goes through
/// here so the inventory stays complete.
pub fn write_output(
    dir: &Path,
    rel: &str,
    bytes: &[u8],
    manifest: &mut RunManifest,
) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    fs::write(&path, bytes).map_err(|e| Error::io(path.display().to_string(), e))?;
    manifest.files.insert(rel.to_string(), sha256_hex(bytes));
    Ok(())
}

/// Every file currently present in `dir` (recursive), as sorted relative
/// paths; the manifest itself and its temp file are excluded.
pub fn list_output_files(dir: &Path) -> Result<Vec<String>> {
    let mut out = BTreeSet::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        let entries =
            fs::read_dir(&current).map_err(|e| Error::io(current.display().to_string(), e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(current.display().to_string(), e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = relative_to(&path, dir);
                if rel != MANIFEST_FILE && rel != format!("{MANIFEST_FILE}.tmp") {
                    out.insert(rel);
                }
            }
        }
    }
    Ok(out.into_iter().collect())
}

fn relative_to(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}
