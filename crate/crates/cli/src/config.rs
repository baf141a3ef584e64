//! The one JSON config consumed by every stage. Unknown keys are rejected;
//! omitted sections fall back to their defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sdfmap_core::augment::{Method, SampleSpec};
use sdfmap_core::confidence::ConfidenceParams;
use sdfmap_core::model::{EncoderConfig, MlpConfig, TrainConfig};
use sdfmap_core::pointcloud::{FilterConfig, RecordLayout};
use sdfmap_core::reconstruct::GridBounds;
use sdfmap_core::synthetic::ScanConfig;

use crate::{CliError, Result};

/// Fourier encoder switch plus its construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub enabled: bool,
    pub freq_scale: f64,
    pub seed: u64,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        let base = EncoderConfig::default();
        Self {
            enabled: true,
            freq_scale: base.freq_scale,
            seed: base.seed,
        }
    }
}

impl EncoderSettings {
    pub fn to_core(self) -> Option<EncoderConfig> {
        self.enabled.then_some(EncoderConfig {
            freq_scale: self.freq_scale,
            seed: self.seed,
        })
    }
}

/// Dense-grid extraction window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub bounds: GridBounds,
    pub resolution: [usize; 3],
    /// Also write the raw grid as CSV (large).
    pub export_csv: bool,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            bounds: GridBounds {
                min: [3.0, -6.0, -2.0],
                max: [12.0, 5.0, 2.0],
            },
            resolution: [72, 88, 32],
            export_csv: false,
        }
    }
}

/// Bird's-eye slice window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceSettings {
    pub z: f64,
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub resolution: [usize; 2],
}

impl Default for SliceSettings {
    fn default() -> Self {
        Self {
            z: 0.0,
            min: [4.0, -5.0],
            max: [11.0, 4.0],
            resolution: [140, 180],
        }
    }
}

/// Oracle-shell evaluation: points are scan hits offset along the analytic
/// surface normal by up to `shell_halfwidth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub shell_halfwidth: f64,
    pub points: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            shell_halfwidth: 0.5,
            points: 4000,
            seed: 5001,
        }
    }
}

/// Shared knobs of the comparative experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    /// One complete arm set per seed.
    pub seeds: Vec<u64>,
    /// Epochs for the depth sweep's 40 models.
    pub sweep_epochs: usize,
    /// Epochs for compare-augment and compare-encoder arms.
    pub compare_epochs: usize,
    /// Held-out fraction denominator: 1/5 of samples become the test split.
    pub holdout_seed: u64,
    /// Worker threads for independent runs (0 = available parallelism).
    pub threads: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            seeds: vec![101, 102, 103, 104, 105],
            sweep_epochs: 20,
            compare_epochs: 100,
            holdout_seed: 77,
            threads: 0,
        }
    }
}

/// Everything a stage can need. Stages read the sections they use and record
/// the whole resolved document in their manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub filter: FilterConfig,
    pub record_layout: RecordLayout,
    pub sample: SampleSpec,
    pub method: Method,
    pub confidence: ConfidenceParams,
    pub encoder: EncoderSettings,
    pub mlp: MlpConfig,
    pub train: TrainConfig,
    pub scan: ScanConfig,
    pub grid: GridSettings,
    pub slice: SliceSettings,
    pub eval: EvalSettings,
    pub experiment: ExperimentSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            record_layout: RecordLayout::default(),
            sample: SampleSpec::default(),
            method: Method::Uniform,
            confidence: ConfidenceParams::default(),
            encoder: EncoderSettings::default(),
            mlp: MlpConfig::default(),
            train: TrainConfig::default(),
            scan: ScanConfig::default(),
            grid: GridSettings::default(),
            slice: SliceSettings::default(),
            eval: EvalSettings::default(),
            experiment: ExperimentSettings::default(),
        }
    }
}

impl PipelineConfig {
    /// The confidence normalization is tied to the sampling truncation; the
    /// resolved config always reflects that.
    pub fn resolve(mut self) -> Result<Self> {
        self.confidence.d_max = sdfmap_core::confidence::dmax_from_dataset(&self.sample);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<Self> {
        self.filter.validate().map_err(CliError::validation)?;
        self.sample.validate().map_err(CliError::validation)?;
        self.confidence.validate().map_err(CliError::validation)?;
        self.mlp.validate().map_err(CliError::validation)?;
        self.train.validate().map_err(CliError::validation)?;
        self.scan.validate().map_err(CliError::validation)?;
        if self.encoder.enabled && !(self.encoder.freq_scale > 0.0) {
            return Err(CliError::Validation(
                "encoder.freq_scale must be > 0".into(),
            ));
        }
        if self.experiment.seeds.is_empty() {
            return Err(CliError::Validation(
                "experiment.seeds must not be empty".into(),
            ));
        }
        Ok(self.clone())
    }

    /// Derive every seed from one override, for `--seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.sample.seed = seed;
        self.mlp.seed = seed.wrapping_add(1);
        self.train.seed = seed.wrapping_add(2);
        self.encoder.seed = seed.wrapping_add(3);
        self.experiment.seeds = vec![seed];
    }
}

/// Read a config file. A manifest written by an earlier run is accepted too:
/// its embedded resolved config is extracted, which is how a run is
/// reproduced from its manifest.
pub fn load_config<P: AsRef<Path>>(path: P) -> Result<PipelineConfig> {
    let path_str = path.as_ref().display().to_string();
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Validation(format!("cannot read config {path_str}: {e}")))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("invalid JSON in {path_str}: {e}")))?;
    let config_value = if value.get("stage").is_some() && value.get("config").is_some() {
        value.get("config").cloned().unwrap()
    } else {
        value
    };
    let config: PipelineConfig = serde_json::from_value(config_value)
        .map_err(|e| CliError::Validation(format!("invalid config in {path_str}: {e}")))?;
    config.resolve()
}
