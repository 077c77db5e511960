//! Pipeline configuration file (TOML). Every section is optional and every
//! field falls back to its default; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use emgse_core::dataset::DatasetConfig;
use emgse_core::dsp::{AUDIO_RATE_HZ, FFT_SIZE, HOP};
use emgse_core::emg::EmgFeatureConfig;
use emgse_core::synth::SynthConfig;
use emgse_model::TrainConfig;

use crate::error::{CliError, Result};
use crate::import::ImportConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub features: EmgFeatureConfig,
    pub import: ImportConfig,
    pub synth: SynthConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::parse(&text)
            }
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        // EMG frames follow the audio STFT grid, so the timing is not free.
        let t = self.features.timing;
        let window = FFT_SIZE as f64 / AUDIO_RATE_HZ as f64;
        let hop = HOP as f64 / AUDIO_RATE_HZ as f64;
        if (t.window_sec - window).abs() > 1e-12 || (t.hop_sec - hop).abs() > 1e-12 {
            return Err(CliError::Config(format!(
                "features.timing must match the audio STFT ({window} s window, {hop} s hop)"
            )));
        }
        self.import.validate()?;
        self.train.validate()?;
        Ok(())
    }
}
