//! Stage manifests: digests of inputs, outputs, and configuration that
//! make pipeline runs resumable and idempotent.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    /// Named input files and their content digests.
    pub inputs: BTreeMap<String, String>,
    /// Named output files and their content digests.
    pub outputs: BTreeMap<String, String>,
    /// Digest of the stage-relevant configuration.
    pub config_digest: String,
    pub counts: BTreeMap<String, u64>,
    pub timestamp: String,
}

impl StageManifest {
    pub fn new(stage: &str) -> Self {
        StageManifest {
            stage: stage.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            config_digest: String::new(),
            counts: BTreeMap::new(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn path(work_dir: &Path, stage: &str) -> PathBuf {
        work_dir.join(format!("manifest-{stage}.json"))
    }

    pub fn load(work_dir: &Path, stage: &str) -> Result<Option<Self>> {
        let path = Self::path(work_dir, stage);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(io::read_json(&path)?))
    }

    pub fn write(&self, work_dir: &Path) -> Result<()> {
        io::write_json_pretty(&Self::path(work_dir, &self.stage), self)
    }

    /// True when recorded inputs and config match the current state and
    /// every recorded output still exists with the recorded digest.
    pub fn is_current(&self, inputs: &BTreeMap<String, String>, config_digest: &str) -> bool {
        if &self.inputs != inputs || self.config_digest != config_digest {
            return false;
        }
        self.outputs.iter().all(|(name, digest)| {
            Path::new(name).exists()
                && io::file_digest(Path::new(name)).map(|d| &d == digest).unwrap_or(false)
        })
    }
}

/// Digest a set of named input files. Missing optional files digest as
/// "absent" so their appearance later still invalidates the stage.
pub fn digest_inputs(files: &[(&str, &Path)]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (name, path) in files {
        let digest = if path.exists() {
            io::file_digest(path)?
        } else {
            "absent".to_string()
        };
        out.insert(name.to_string(), digest);
    }
    Ok(out)
}

/// Digest the outputs a stage just wrote, keyed by absolute path string.
pub fn digest_outputs(paths: &[&Path]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for path in paths {
        out.insert(path.display().to_string(), io::file_digest(path)?);
    }
    Ok(out)
}

/// Digest of any serializable stage-parameter bundle.
pub fn config_digest<T: Serialize>(params: &T) -> String {
    let bytes = serde_json::to_vec(params).expect("stage params serialize");
    io::sha256_hex(&bytes)
}
