//! Enhancement and latent export with a trained checkpoint.

use ndarray::Array2;

use emgse_core::audio::{extract_audio_features, reconstruct_waveform};
use emgse_core::emg::EmgRecording;
use emgse_core::Waveform;

use crate::checkpoint::Checkpoint;
use crate::error::{ModelError, Result};

fn emg_features(ckpt: &Checkpoint, noisy: &Waveform, emg: Option<&EmgRecording>) -> Result<Option<Array2<f64>>> {
    if !ckpt.net.config.variant.uses_emg() {
        return Ok(None);
    }
    let emg = emg.ok_or_else(|| {
        ModelError::MissingModality(format!(
            "{} checkpoint needs an EMG recording",
            ckpt.net.config.variant.label()
        ))
    })?;
    let audio_sec = noisy.duration_sec();
    let emg_sec = emg.num_samples() as f64 / emg.sample_rate_hz as f64;
    if (audio_sec - emg_sec).abs() > ckpt.pipeline.emg.timing.hop_sec {
        return Err(ModelError::Shape(format!(
            "audio lasts {audio_sec:.3} s but EMG {emg_sec:.3} s"
        )));
    }
    Ok(Some(ckpt.pipeline.emg_input(emg, noisy.len())?))
}

/// Noisy waveform in, enhanced waveform of the same length out. The
/// estimate is combined with the noisy phase; samples beyond the last full
/// frame are zero.
pub fn enhance(ckpt: &Checkpoint, noisy: &Waveform, emg: Option<&EmgRecording>) -> Result<Waveform> {
    let x_emg = emg_features(ckpt, noisy, emg)?;
    let feats = extract_audio_features(noisy, Some(&ckpt.pipeline.audio_norm))?;
    let out = ckpt
        .net
        .forward(x_emg.as_ref().map(|x| x.view()), feats.log_mag.view(), None)?;
    let y = reconstruct_waveform(out.z.view(), feats.phase.view(), &ckpt.pipeline.audio_norm)?;
    let n = noisy.len();
    Ok(y.with_len(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentCondition {
    /// Clean audio, EMG input zeroed.
    CleanOnly,
    /// Noisy audio, EMG input zeroed.
    NoisyOnly,
    NoisyPlusEmg,
}

impl LatentCondition {
    pub fn name(self) -> &'static str {
        match self {
            LatentCondition::CleanOnly => "clean_only",
            LatentCondition::NoisyOnly => "noisy_only",
            LatentCondition::NoisyPlusEmg => "noisy_plus_emg",
        }
    }
}

/// Fusion-layer latents of one utterance under each condition, and the
/// element-wise absolute differences between them.
#[derive(Debug, Clone)]
pub struct LatentExport {
    pub clean_only: Array2<f64>,
    pub noisy_only: Array2<f64>,
    pub noisy_plus_emg: Array2<f64>,
}

impl LatentExport {
    pub fn get(&self, c: LatentCondition) -> &Array2<f64> {
        match c {
            LatentCondition::CleanOnly => &self.clean_only,
            LatentCondition::NoisyOnly => &self.noisy_only,
            LatentCondition::NoisyPlusEmg => &self.noisy_plus_emg,
        }
    }

    pub fn difference(&self, a: LatentCondition, b: LatentCondition) -> Array2<f64> {
        (self.get(a) - self.get(b)).mapv(f64::abs)
    }

    pub fn mean_difference(&self, a: LatentCondition, b: LatentCondition) -> f64 {
        self.difference(a, b).mean().unwrap_or(0.0)
    }
}

pub fn latent(ckpt: &Checkpoint, audio: &Waveform, emg: Option<&EmgRecording>) -> Result<Array2<f64>> {
    let feats = extract_audio_features(audio, Some(&ckpt.pipeline.audio_norm))?;
    let x_emg = match (ckpt.net.config.variant.uses_emg(), emg) {
        (false, _) => None,
        (true, Some(e)) => emg_features(ckpt, audio, Some(e))?,
        (true, None) => Some(Array2::zeros((feats.log_mag.nrows(), ckpt.net.config.emg_dim))),
    };
    Ok(ckpt
        .net
        .forward(x_emg.as_ref().map(|x| x.view()), feats.log_mag.view(), None)?
        .latent)
}

pub fn export_latents(
    ckpt: &Checkpoint,
    clean: &Waveform,
    noisy: &Waveform,
    emg: &EmgRecording,
) -> Result<LatentExport> {
    if clean.len() != noisy.len() {
        return Err(ModelError::Shape("clean and noisy versions differ in length".into()));
    }
    Ok(LatentExport {
        clean_only: latent(ckpt, clean, None)?,
        noisy_only: latent(ckpt, noisy, None)?,
        noisy_plus_emg: latent(ckpt, noisy, Some(emg))?,
    })
}
