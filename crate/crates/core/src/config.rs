//! Run configuration: one TOML file with a section per subsystem. Unknown
//! keys are rejected; every command writes the fully resolved configuration
//! next to its outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::FrontendConfig;
use crate::augment::AugmentConfig;
use crate::eval::EvalConfig;
use crate::features::{LldConfig, SCHEMA_ID};
use crate::nn::ModelConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    pub schema: String,
    pub f0_min: f64,
    pub f0_max: f64,
    pub voicing_threshold: f64,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        let p = LldConfig::default().pitch;
        Self {
            schema: SCHEMA_ID.to_string(),
            f0_min: p.f0_min,
            f0_max: p.f0_max,
            voicing_threshold: p.voicing_threshold,
        }
    }
}

impl FeaturesConfig {
    pub fn lld_config(&self) -> LldConfig {
        let mut c = LldConfig::default();
        c.pitch.f0_min = self.f0_min;
        c.pitch.f0_max = self.f0_max;
        c.pitch.voicing_threshold = self.voicing_threshold;
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub frontend: FrontendConfig,
    pub features: FeaturesConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.features.schema != SCHEMA_ID {
            return Err(format!(
                "features.schema '{}' is not supported (only {SCHEMA_ID})",
                self.features.schema
            ));
        }
        if self.model.mel_bins != self.frontend.mel_bins {
            return Err(format!(
                "model.mel_bins ({}) must equal frontend.mel_bins ({})",
                self.model.mel_bins, self.frontend.mel_bins
            ));
        }
        self.model.validate().map_err(|e| e.to_string())?;
        self.augment.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        Ok(())
    }
}

/// Write to a temporary sibling, then rename over the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
