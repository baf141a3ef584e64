//! Run manifests: the reproducibility record written next to every artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sdfmap_core::model::TrainConfig;

use crate::config::PipelineConfig;
use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// What a stage ran with and what it produced. The `config` field is the
/// fully resolved configuration; feeding the manifest back as `--config`
/// reruns the stage identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub experiment_id: String,
    pub stage: String,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub config: PipelineConfig,
    /// Type-level defaults, recorded so the fidelity defaults (notably the
    /// 0.4 learning rate) stay visible next to the resolved values.
    pub train_defaults: TrainConfig,
    pub inputs: BTreeMap<String, InputRecord>,
    pub artifacts: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, serde_json::Value>,
}

pub struct ManifestBuilder {
    stage: String,
    started_at: chrono::DateTime<chrono::Utc>,
    config: PipelineConfig,
    inputs: BTreeMap<String, InputRecord>,
    artifacts: BTreeMap<String, String>,
    metrics: BTreeMap<String, serde_json::Value>,
}

impl ManifestBuilder {
    pub fn new(stage: &str, config: &PipelineConfig) -> Self {
        Self {
            stage: stage.to_string(),
            started_at: chrono::Utc::now(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            metrics: BTreeMap::new(),
        }
    }

    /// Record an input file with its content hash.
    pub fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::Validation(format!("missing input {}: {e}", path.display())))?;
        self.inputs.insert(
            name.to_string(),
            InputRecord {
                path: path.display().to_string(),
                sha256: hex_digest(&bytes),
            },
        );
        Ok(())
    }

    pub fn artifact(&mut self, name: &str, filename: &str) {
        self.artifacts.insert(name.to_string(), filename.to_string());
    }

    pub fn metric(&mut self, name: &str, value: impl Serialize) {
        self.metrics.insert(
            name.to_string(),
            serde_json::to_value(value).expect("metric serializes"),
        );
    }

    /// Finish and write `manifest.json` into `out_dir`.
    pub fn write(self, out_dir: &Path) -> Result<Manifest> {
        // Stable id from config + inputs, so reruns share it.
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.config).expect("config serializes"));
        for (name, rec) in &self.inputs {
            hasher.update(name.as_bytes());
            hasher.update(rec.sha256.as_bytes());
        }
        hasher.update(self.stage.as_bytes());
        let digest = hasher.finalize();
        let experiment_id = format!("{}-{}", self.stage, &hex::encode_short(&digest));

        let manifest = Manifest {
            format_version: 1,
            experiment_id,
            stage: self.stage,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at.to_rfc3339(),
            finished_at: chrono::Utc::now().to_rfc3339(),
            config: self.config,
            train_defaults: TrainConfig::default(),
            inputs: self.inputs,
            artifacts: self.artifacts,
            metrics: self.metrics,
        };
        let path = out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(manifest)
    }
}

pub fn load_manifest<P: AsRef<Path>>(path: P) -> Result<Manifest> {
    let path_str = path.as_ref().display().to_string();
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Validation(format!("cannot read manifest {path_str}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("invalid manifest {path_str}: {e}")))
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode_full(&hasher.finalize())
}

/// Hash of a file already on disk.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Runtime(format!("cannot hash {}: {e}", path.display())))?;
    Ok(hex_digest(&bytes))
}

mod hex {
    pub fn encode_full(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn encode_short(bytes: &[u8]) -> String {
        bytes.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

/// Ensure the output directory exists.
pub fn prepare_out_dir(out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    Ok(out.to_path_buf())
}
