//! The JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sspain_core::data::{AuId, RescaleTable};
use sspain_core::network::ModelConfig;
use sspain_core::synth::SynthConfig;
use sspain_core::training::{TrainConfig, Variant};

pub const ECHO_FILE: &str = "config.echo.json";

/// Everything a run depends on besides paths given on the command line.
/// Every section is optional; missing keys take their defaults and unknown
/// keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// PSPI -> level thresholds used when loading a dataset from disk.
    pub rescale: RescaleTable,
    /// Dataset root. Without one, data is generated from `synth`.
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub variant: Variant,
    pub saliency: SaliencyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            rescale: RescaleTable::default(),
            data: None,
            out: PathBuf::from("out"),
            variant: Variant::Method2,
            saliency: SaliencyConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaliencyConfig {
    /// Frames to export. Empty picks the first frame of every level.
    pub frames: Vec<String>,
    /// Half-width of the boxes used for the concentration ratio.
    pub box_half: usize,
    /// Ground-truth relevant AUs for the concentration ratio when the data
    /// does not carry them.
    pub relevant_au_ids: Option<Vec<AuId>>,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            frames: Vec::new(),
            box_half: 3,
            relevant_au_ids: None,
        }
    }
}

/// A rejected configuration: unreadable, malformed or invalid. Reported as
/// a usage error.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                ConfigError(format!("config: {}", e.inner()))
            } else {
                ConfigError(format!("config at {path}: {}", e.inner()))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let wrap = |e: sspain_core::Error| ConfigError(e.to_string());
        self.synth.validate().map_err(wrap)?;
        self.model.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.rescale.validate().map_err(wrap)?;
        if self.synth.image_size != self.model.image_size[0] || self.synth.image_size != self.model.image_size[1] {
            if self.data.is_none() {
                return Err(ConfigError(format!(
                    "synth.image_size {} does not match model.image_size {:?}",
                    self.synth.image_size, self.model.image_size
                )));
            }
        }
        if self.saliency.box_half == 0 {
            return Err(ConfigError("saliency.box_half must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the fully materialized configuration into the output dir.
    pub fn write_echo(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(ECHO_FILE);
        fs::write(&path, self.to_json()? + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Reads and validates a configuration file; `None` means all defaults.
pub fn parse_config(path: Option<&Path>) -> std::result::Result<RunConfig, ConfigError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            RunConfig::from_json(&text)
        }
    }
}
