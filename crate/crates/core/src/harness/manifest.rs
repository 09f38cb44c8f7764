use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sha256_hex, ExperimentConfig};
use crate::dataset::Role;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Invalid,
}

/// One pipeline stage of one run, with the partitions it consumed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub stage: String,
    pub wall_secs: f64,
    pub inputs: Vec<Role>,
    pub n_samples: usize,
    /// Hash of the source-row indices consumed, in order.
    pub source_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Written before any result file and rewritten when the run ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub name: String,
    pub version: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputFile>,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub const FILE: &'static str = "manifest.json";

    pub(crate) fn start(config: &ExperimentConfig) -> Self {
        Self {
            status: RunStatus::Running,
            error: None,
            name: config.name.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config_checksum(config),
            seeds: config.seeds(),
            stages: Vec::new(),
            outputs: Vec::new(),
            config: config.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        std::fs::write(dir.join(Self::FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(Self::FILE))?;
        serde_json::from_str(&text).map_err(|e| crate::Error::Format(format!("manifest: {e}")))
    }

    pub(crate) fn record_output(&mut self, dir: &Path, rel: &str) -> Result<()> {
        let bytes = std::fs::read(dir.join(rel))?;
        self.outputs.push(OutputFile {
            path: rel.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Roles that reached the named stage in any run.
    pub fn stage_roles(&self, stage: &str) -> std::collections::BTreeSet<Role> {
        self.stages
            .iter()
            .filter(|s| s.stage == stage)
            .flat_map(|s| s.inputs.iter().copied())
            .collect()
    }
}

/// Checksum of the config as it was run, output location excluded.
pub(crate) fn config_checksum(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.out = None;
    sha256_hex(serde_json::to_string(&c).expect("config serialises").as_bytes())
}

pub(crate) fn indices_checksum(indices: &[usize]) -> String {
    let bytes: Vec<u8> = indices.iter().flat_map(|i| (*i as u64).to_le_bytes()).collect();
    sha256_hex(&bytes)
}
