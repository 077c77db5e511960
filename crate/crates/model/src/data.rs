//! Loading a mixture index into memory and turning mixtures into network
//! inputs and targets.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use emgse_core::audio::extract_audio_features;
use emgse_core::dataset::{render_mixture, DatasetIndex, MixSpec, Split};
use emgse_core::dsp::{make_frame_clock, NUM_BINS};
use emgse_core::emg::{extract_emg_features_on, ChannelSet, EmgFeatureConfig, EmgRecording};
use emgse_core::formats::{emg_read, wav_read};
use emgse_core::normalize::{Normalizer, NormalizerFit};
use emgse_core::Waveform;

use crate::error::{ModelError, Result};

/// Clean audio, EMG and raw noise for the utterances of the chosen splits.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub index: DatasetIndex,
    clean: BTreeMap<String, Waveform>,
    emg: BTreeMap<String, EmgRecording>,
    noise: BTreeMap<String, Waveform>,
}

impl Corpus {
    pub fn load(index: &DatasetIndex, splits: &[Split]) -> Result<Self> {
        let mut corpus = Corpus {
            index: index.clone(),
            ..Corpus::default()
        };
        for u in index.utterances.iter().filter(|u| splits.contains(&u.split)) {
            corpus.clean.insert(u.id.clone(), wav_read(&u.audio)?);
            corpus.emg.insert(u.id.clone(), emg_read(&u.emg)?);
        }
        for m in index.mixtures.iter().filter(|m| splits.contains(&m.split)) {
            if !corpus.noise.contains_key(&m.noise_id) {
                let entry = index.noise(&m.noise_id)?;
                corpus.noise.insert(m.noise_id.clone(), wav_read(&entry.path)?);
            }
        }
        Ok(corpus)
    }

    /// Builds a corpus from in-memory recordings.
    pub fn from_parts(
        index: DatasetIndex,
        clean: BTreeMap<String, Waveform>,
        emg: BTreeMap<String, EmgRecording>,
        noise: BTreeMap<String, Waveform>,
    ) -> Self {
        Self {
            index,
            clean,
            emg,
            noise,
        }
    }

    pub fn mixtures(&self, split: Split) -> Vec<&MixSpec> {
        self.index.mixtures_in(split).collect()
    }

    pub fn clean(&self, id: &str) -> Result<&Waveform> {
        self.clean
            .get(id)
            .ok_or_else(|| ModelError::Training(format!("utterance {id} not loaded")))
    }

    pub fn emg(&self, id: &str) -> Result<&EmgRecording> {
        self.emg
            .get(id)
            .ok_or_else(|| ModelError::Training(format!("EMG for {id} not loaded")))
    }

    pub fn noisy(&self, mix: &MixSpec) -> Result<Waveform> {
        let noise = self
            .noise
            .get(&mix.noise_id)
            .ok_or_else(|| ModelError::Training(format!("noise {} not loaded", mix.noise_id)))?;
        Ok(render_mixture(mix, self.clean(&mix.clean_id)?, noise)?)
    }
}

/// How the inputs of a model are computed from recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub emg: EmgFeatureConfig,
    pub channel_set: ChannelSet,
    pub audio_norm: Normalizer,
    /// Absent for audio-only models.
    pub emg_norm: Option<Normalizer>,
}

/// One training or evaluation sequence.
#[derive(Debug, Clone)]
pub struct Example {
    pub x_emg: Option<Array2<f64>>,
    pub x_audio: Array2<f64>,
    pub target: Array2<f64>,
}

impl FeaturePipeline {
    pub fn audio_input(&self, noisy: &Waveform) -> Result<Array2<f64>> {
        Ok(extract_audio_features(noisy, Some(&self.audio_norm))?.log_mag)
    }

    /// EMG features on the frame grid of an audio signal of `audio_len`
    /// samples, so both modalities have the same frame count.
    pub fn emg_input(&self, emg: &EmgRecording, audio_len: usize) -> Result<Array2<f64>> {
        let norm = self
            .emg_norm
            .as_ref()
            .ok_or_else(|| ModelError::MissingModality("pipeline has no EMG normalizer".into()))?;
        let clock = make_frame_clock(audio_len, emgse_core::dsp::AUDIO_RATE_HZ)?;
        Ok(extract_emg_features_on(
            emg,
            self.channel_set,
            Some(norm),
            &self.emg,
            &clock,
        )?)
    }

    pub fn example(&self, corpus: &Corpus, mix: &MixSpec) -> Result<Example> {
        let clean = corpus.clean(&mix.clean_id)?;
        let noisy = corpus.noisy(mix)?;
        let x_emg = match self.emg_norm {
            Some(_) => Some(self.emg_input(corpus.emg(&mix.clean_id)?, clean.len())?),
            None => None,
        };
        Ok(Example {
            x_emg,
            x_audio: self.audio_input(&noisy)?,
            target: self.audio_input(clean)?,
        })
    }
}

/// Fits the audio normalizer on every training mixture and clean training
/// utterance, and (when `with_emg`) the EMG normalizer on the training
/// utterances' stacked features.
pub fn fit_pipeline(
    corpus: &Corpus,
    emg_cfg: &EmgFeatureConfig,
    channel_set: ChannelSet,
    with_emg: bool,
    jobs: usize,
) -> Result<FeaturePipeline> {
    let mixes = corpus.mixtures(Split::Train);
    if mixes.is_empty() {
        return Err(ModelError::Training("no training mixtures to fit normalizers".into()));
    }
    let mut clean_ids: Vec<&str> = mixes.iter().map(|m| m.clean_id.as_str()).collect();
    clean_ids.sort_unstable();
    clean_ids.dedup();

    let pool = thread_pool(jobs)?;
    let audio_fits: Vec<NormalizerFit> = pool.install(|| {
        let noisy = mixes.par_iter().map(|m| -> Result<NormalizerFit> {
            let mut fit = NormalizerFit::new(NUM_BINS);
            fit.observe(extract_audio_features(&corpus.noisy(m)?, None)?.log_mag.view())?;
            Ok(fit)
        });
        let clean = clean_ids.par_iter().map(|id| -> Result<NormalizerFit> {
            let mut fit = NormalizerFit::new(NUM_BINS);
            fit.observe(extract_audio_features(corpus.clean(id)?, None)?.log_mag.view())?;
            Ok(fit)
        });
        noisy.chain(clean).collect::<Result<Vec<_>>>()
    })?;
    let audio_norm = merge_fits(audio_fits)?;

    let emg_norm = if with_emg {
        let fits: Vec<NormalizerFit> = pool.install(|| {
            clean_ids
                .par_iter()
                .map(|id| -> Result<NormalizerFit> {
                    let rec = corpus.emg(id)?;
                    let clock = make_frame_clock(corpus.clean(id)?.len(), emgse_core::dsp::AUDIO_RATE_HZ)?;
                    let x = extract_emg_features_on(rec, channel_set, None, emg_cfg, &clock)?;
                    let mut fit = NormalizerFit::new(x.ncols());
                    fit.observe(x.view())?;
                    Ok(fit)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        Some(merge_fits(fits)?)
    } else {
        None
    };
    Ok(FeaturePipeline {
        emg: *emg_cfg,
        channel_set,
        audio_norm,
        emg_norm,
    })
}

fn merge_fits(fits: Vec<NormalizerFit>) -> Result<Normalizer> {
    let mut it = fits.into_iter();
    let first = it.next().ok_or_else(|| ModelError::Training("nothing to fit".into()))?;
    let merged = it.try_fold(first, |a, b| a.merge(b))?;
    Ok(merged.finish()?)
}

pub(crate) fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ModelError::Config(format!("thread pool: {e}")))
}

/// Noise type of a noise id: the id without a trailing `_NN` variant tag.
pub fn noise_type(noise_id: &str) -> &str {
    match noise_id.rsplit_once('_') {
        Some((head, tail)) if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) => head,
        _ => noise_id,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_type_strips_variant() {
        assert_eq!(noise_type("babble_01"), "babble");
        assert_eq!(noise_type("street_noise"), "street_noise");
        assert_eq!(noise_type("hiss"), "hiss");
    }
}
