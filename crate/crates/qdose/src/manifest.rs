use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SeedStream};
use crate::error::Result;
use crate::io::{read_artifact, sha256_file, write_artifact, ARTIFACT_VERSION};

pub const MANIFEST_FORMAT: &str = "qdose-manifest";
pub const MANIFEST_DIR: &str = "manifests";

/// A file under the run directory and its content hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl ArtifactRecord {
    pub fn of(run_dir: &Path, rel: &Path) -> Result<Self> {
        let full = run_dir.join(rel);
        let bytes = std::fs::metadata(&full)
            .map_err(|e| crate::error::QdoseError::io(&full, e))?
            .len();
        Ok(Self {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_file(&full)?,
            bytes,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    pub artifact_version: u32,
    pub config: RunConfig,
    pub seeds: BTreeMap<SeedStream, u64>,
    pub inputs: Vec<ArtifactRecord>,
    pub outputs: Vec<ArtifactRecord>,
    pub elapsed_ms: u64,
}

impl RunManifest {
    pub fn new(stage: &str, config: &RunConfig) -> Self {
        Self {
            stage: stage.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            artifact_version: ARTIFACT_VERSION,
            config: config.clone(),
            seeds: SeedStream::ALL.iter().map(|&s| (s, config.seed_for(s))).collect(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            elapsed_ms: 0,
        }
    }

    pub fn path_for(run_dir: &Path, stage: &str) -> PathBuf {
        run_dir.join(MANIFEST_DIR).join(format!("{stage}.json"))
    }

    pub fn write(&self, run_dir: &Path) -> Result<PathBuf> {
        let path = Self::path_for(run_dir, &self.stage);
        write_artifact(&path, MANIFEST_FORMAT, self)?;
        Ok(path)
    }

    pub fn read(run_dir: &Path, stage: &str) -> Result<Self> {
        read_artifact(&Self::path_for(run_dir, stage), MANIFEST_FORMAT)
    }

    /// Output records whose file is missing or whose hash changed.
    pub fn stale_outputs(&self, run_dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|r| ArtifactRecord::of(run_dir, Path::new(&r.path)).map_or(true, |now| now != **r))
            .map(|r| r.path.clone())
            .collect()
    }
}
