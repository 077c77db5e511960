//! Desk-scale synthetic corpus: speech-like audio with a syllabic envelope,
//! 35-channel EMG-like signals driven by that envelope, and two disjoint
//! banks of noise recordings.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{derive_seed, NoiseBank, NoiseEntry, Split};
use crate::dsp::{design_butterworth, FilterKind, FrameClock, FrameTiming, AUDIO_RATE_HZ};
use crate::emg::{default_channel_ids, EmgRecording, EMG_RATE_HZ};
use crate::error::{Error, Result};
use crate::formats::{emg_write, wav_write, Manifest, ManifestRow};
use crate::waveform::Waveform;

pub const TRAIN_NOISE_TYPES: [&str; 7] = ["white", "pink", "brown", "hum", "bandnoise", "modulated", "chatter"];
pub const TEST_NOISE_TYPES: [&str; 4] = ["babble", "car", "street", "engine"];

/// Durations are drawn on this grid so audio and EMG sample counts are
/// both integers (125 audio and 16 EMG samples per tick).
const TICKS_PER_SEC: f64 = 128.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_speakers: usize,
    pub train_per_speaker: usize,
    pub val_per_speaker: usize,
    pub test_per_speaker: usize,
    pub min_duration_sec: f64,
    pub max_duration_sec: f64,
    pub cheek_channels: usize,
    pub chin_channels: usize,
    pub noise_variants: usize,
    pub noise_duration_sec: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_speakers: 4,
            train_per_speaker: 28,
            val_per_speaker: 4,
            test_per_speaker: 8,
            min_duration_sec: 1.0,
            max_duration_sec: 1.5,
            cheek_channels: 28,
            chin_channels: 7,
            noise_variants: 2,
            noise_duration_sec: 4.0,
        }
    }
}

impl SynthConfig {
    pub fn utterances_per_speaker(&self) -> usize {
        self.train_per_speaker + self.val_per_speaker + self.test_per_speaker
    }

    fn validate(&self) -> Result<()> {
        if self.num_speakers == 0 || self.utterances_per_speaker() == 0 {
            return Err(Error::invalid("synthetic corpus needs speakers and utterances"));
        }
        if !(self.min_duration_sec >= 0.5 && self.max_duration_sec >= self.min_duration_sec) {
            return Err(Error::invalid("duration range must satisfy 0.5 <= min <= max"));
        }
        if self.cheek_channels + self.chin_channels == 0 {
            return Err(Error::invalid("at least one EMG channel is required"));
        }
        if self.noise_variants == 0 || !(self.noise_duration_sec >= 0.5) {
            return Err(Error::invalid("noise banks need variants of at least 0.5 s"));
        }
        Ok(())
    }
}

/// Fixed per-speaker traits: voice and electrode placement.
#[derive(Debug, Clone)]
pub struct SpeakerProfile {
    pub f0_hz: f64,
    pub formant_scale: f64,
    channels: Vec<ChannelCoupling>,
}

#[derive(Debug, Clone)]
struct ChannelCoupling {
    envelope_weight: f64,
    derivative_weight: f64,
    lead_sec: f64,
    gain: f64,
}

impl SpeakerProfile {
    pub fn random<R: Rng>(rng: &mut R, cheek: usize, chin: usize) -> Self {
        let channels = (0..cheek + chin)
            .map(|c| ChannelCoupling {
                envelope_weight: if c < cheek {
                    rng.gen_range(0.6..1.0)
                } else {
                    rng.gen_range(0.3..0.7)
                },
                derivative_weight: rng.gen_range(-0.4..0.4),
                lead_sec: rng.gen_range(0.0..0.04),
                gain: rng.gen_range(0.5..1.5),
            })
            .collect();
        Self {
            f0_hz: rng.gen_range(90.0..230.0),
            formant_scale: rng.gen_range(0.9..1.15),
            channels,
        }
    }
}

/// One generated utterance plus the articulation envelope that drove it.
#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub audio: Waveform,
    pub emg: EmgRecording,
    /// Articulatory activity at the audio rate, peak-normalized to 1.
    pub envelope: Vec<f64>,
}

struct Syllable {
    start: usize,
    len: usize,
    amp: f64,
    formants: [f64; 3],
    fricative: Option<(usize, f64)>,
}

fn plan_syllables<R: Rng>(rng: &mut R, n: usize, formant_scale: f64) -> Vec<Syllable> {
    let fs = AUDIO_RATE_HZ as f64;
    let mut t = (rng.gen_range(0.08..0.15) * fs) as usize;
    let end = n.saturating_sub((0.1 * fs) as usize);
    let mut out = Vec::new();
    while t < end {
        if rng.gen_bool(0.12) && !out.is_empty() {
            t += (rng.gen_range(0.1..0.25) * fs) as usize;
            continue;
        }
        let len = ((fs / rng.gen_range(3.0..6.0)) as usize).min(end - t);
        if len < (0.05 * fs) as usize {
            break;
        }
        let fricative = rng
            .gen_bool(0.35)
            .then(|| ((rng.gen_range(0.03..0.07) * fs) as usize, rng.gen_range(0.3..0.6)));
        out.push(Syllable {
            start: t,
            len,
            amp: rng.gen_range(0.5..1.0),
            formants: [
                rng.gen_range(300.0..800.0) * formant_scale,
                rng.gen_range(900.0..2300.0) * formant_scale,
                rng.gen_range(2500.0..3000.0) * formant_scale,
            ],
            fricative,
        });
        t += len;
    }
    out
}

fn gaussian_noise<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn harmonic_gain(freq: f64, formants: &[f64; 3]) -> f64 {
    const BW: [f64; 3] = [90.0, 120.0, 180.0];
    const G: [f64; 3] = [1.0, 0.6, 0.3];
    let mut g = 0.05 * (200.0 / freq.max(50.0));
    for k in 0..3 {
        let d = (freq - formants[k]) / BW[k];
        g += G[k] * (-0.5 * d * d).exp();
    }
    g
}

/// Speech-like audio (unit scale) and its articulation envelope.
fn synth_speech<R: Rng>(rng: &mut R, profile: &SpeakerProfile, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let fs = AUDIO_RATE_HZ as f64;
    let syllables = plan_syllables(rng, n, profile.formant_scale);
    let mut voiced_env = vec![0.0_f64; n];
    let mut fric_env = vec![0.0_f64; n];
    let mut formant_at = vec![0usize; n];
    for (si, s) in syllables.iter().enumerate() {
        for i in 0..s.len {
            let u = (i as f64 + 0.5) / s.len as f64;
            voiced_env[s.start + i] = s.amp * (PI * u).sin().powf(1.5);
            formant_at[s.start + i] = si;
        }
        if let Some((flen, famp)) = s.fricative {
            let fstart = s.start.saturating_sub(flen / 2);
            for i in 0..flen.min(n - fstart) {
                let v = (i as f64 + 0.5) / flen as f64;
                fric_env[fstart + i] = fric_env[fstart + i].max(famp * (PI * v).sin());
            }
        }
    }

    let contour_rate = rng.gen_range(0.4..1.0);
    let contour_phase = rng.gen_range(0.0..2.0 * PI);
    let decl = rng.gen_range(0.0..0.15);
    let dur = n as f64 / fs;
    let mut phase = 0.0;
    let mut voiced = vec![0.0; n];
    const BLOCK: usize = 64;
    let mut gains: Vec<f64> = Vec::new();
    for i in 0..n {
        let t = i as f64 / fs;
        let f0 = profile.f0_hz * (1.0 + 0.1 * (2.0 * PI * contour_rate * t + contour_phase).sin() - decl * t / dur);
        if i % BLOCK == 0 {
            let h_max = ((5000.0 / f0) as usize).max(1);
            let formants = syllables
                .get(formant_at[i])
                .map(|s| s.formants)
                .unwrap_or([500.0, 1500.0, 2700.0]);
            gains = (1..=h_max).map(|h| harmonic_gain(h as f64 * f0, &formants)).collect();
        }
        phase += 2.0 * PI * f0 / fs;
        if phase > 2.0 * PI {
            phase -= 2.0 * PI;
        }
        if voiced_env[i] > 0.0 {
            let s: f64 = gains
                .iter()
                .enumerate()
                .map(|(h, g)| g * ((h + 1) as f64 * phase).sin())
                .sum();
            voiced[i] = voiced_env[i] * s;
        }
    }

    let hp = design_butterworth(4, 2500.0, fs, FilterKind::Highpass)?;
    let hiss = hp.apply(&gaussian_noise(rng, n))?;
    let vr = rms(&voiced).max(1e-12);
    let hr = rms(&hiss).max(1e-12);
    let audio: Vec<f64> = (0..n)
        .map(|i| voiced[i] / vr * 0.5 + fric_env[i] * hiss[i] / hr * 0.8 + 1e-4 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut envelope: Vec<f64> = (0..n).map(|i| voiced_env[i] + fric_env[i]).collect();
    let peak = envelope.iter().cloned().fold(0.0, f64::max).max(1e-12);
    envelope.iter_mut().for_each(|v| *v /= peak);
    Ok((audio, envelope))
}

fn synth_emg<R: Rng>(rng: &mut R, profile: &SpeakerProfile, envelope: &[f64], n_emg: usize) -> Result<Array2<f64>> {
    let fs = EMG_RATE_HZ as f64;
    let hp = design_butterworth(2, 20.0, fs, FilterKind::Highpass)?;
    let lp = design_butterworth(4, 450.0, fs, FilterKind::Lowpass)?;
    let last = envelope.len() - 1;
    let env_at = |t_sec: f64| -> f64 {
        let idx = (t_sec * AUDIO_RATE_HZ as f64).round();
        envelope[(idx.max(0.0) as usize).min(last)]
    };
    let mut out = Array2::zeros((profile.channels.len(), n_emg));
    for (c, ch) in profile.channels.iter().enumerate() {
        let e: Vec<f64> = (0..n_emg).map(|k| env_at(k as f64 / fs + ch.lead_sec)).collect();
        // central difference of the envelope, peak-normalized
        let mut d: Vec<f64> = (0..n_emg)
            .map(|k| {
                let a = e[k.saturating_sub(1)];
                let b = e[(k + 1).min(n_emg - 1)];
                b - a
            })
            .collect();
        let dpk = d.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
        d.iter_mut().for_each(|v| *v /= dpk);
        let carrier = lp.apply(&hp.apply(&gaussian_noise(rng, n_emg))?)?;
        let cr = rms(&carrier).max(1e-12);
        for k in 0..n_emg {
            let m = (ch.envelope_weight * e[k] + ch.derivative_weight * d[k]).max(0.0);
            let sensor: f64 = rng.sample(StandardNormal);
            out[[c, k]] = ch.gain * (m * carrier[k] / cr + 0.05 * sensor);
        }
    }
    Ok(out)
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Generates one utterance of `ticks / 128` seconds.
pub fn synth_utterance<R: Rng>(
    rng: &mut R,
    profile: &SpeakerProfile,
    ticks: usize,
    cheek: usize,
    chin: usize,
) -> Result<SynthUtterance> {
    let n_audio = ticks * (AUDIO_RATE_HZ as usize / TICKS_PER_SEC as usize);
    let n_emg = ticks * (EMG_RATE_HZ as usize / TICKS_PER_SEC as usize);
    let (mut audio, envelope) = synth_speech(rng, profile, n_audio)?;
    let target = rng.gen_range(0.05..0.15);
    let r = rms(&audio).max(1e-12);
    audio.iter_mut().for_each(|v| *v *= target / r);
    let emg = synth_emg(rng, profile, &envelope, n_emg)?;
    Ok(SynthUtterance {
        audio: Waveform::new(audio, AUDIO_RATE_HZ)?,
        emg: EmgRecording::new(emg, EMG_RATE_HZ, default_channel_ids(cheek, chin))?,
        envelope,
    })
}

/// Pearson correlation between the frame-RMS envelope of the audio and the
/// channel-averaged frame-RMS envelope of the EMG, on the shared frame clock.
pub fn envelope_correlation(audio: &Waveform, emg: &EmgRecording) -> Result<f64> {
    let clock = FrameClock::new(FrameTiming::default(), audio.len(), audio.sample_rate_hz())?;
    let emg_clock = clock.at_rate(emg.sample_rate_hz);
    let mut buf = Vec::new();
    let a: Vec<f64> = (0..clock.num_frames)
        .map(|f| rms(clock.frame(audio.samples(), f, &mut buf)))
        .collect();
    let rows: Vec<Vec<f64>> = emg.channels.rows().into_iter().map(|r| r.to_vec()).collect();
    let e: Vec<f64> = (0..emg_clock.num_frames)
        .map(|f| rows.iter().map(|r| rms(emg_clock.frame(r, f, &mut buf))).sum::<f64>() / rows.len() as f64)
        .collect();
    pearson(&a, &e)
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::ShapeMismatch("correlation needs equal-length series".into()));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::UndefinedScore("constant envelope".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// A noise recording of the named type, RMS 0.1.
pub fn synth_noise<R: Rng>(rng: &mut R, kind: &str, n: usize) -> Result<Waveform> {
    let fs = AUDIO_RATE_HZ as f64;
    let t = |i: usize| i as f64 / fs;
    let mut x: Vec<f64> = match kind {
        "white" => gaussian_noise(rng, n),
        "pink" => pink(rng, n),
        "brown" => brown(rng, n),
        "hum" => {
            let f = rng.gen_range(50.0..120.0);
            let ph: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            (0..n)
                .map(|i| {
                    (1..=10)
                        .map(|h| (2.0 * PI * f * h as f64 * t(i) + ph[h - 1]).sin() / h as f64)
                        .sum::<f64>()
                        + 0.05 * rng.sample::<f64, _>(StandardNormal)
                })
                .collect()
        }
        "bandnoise" => {
            let lo = rng.gen_range(200.0..2000.0);
            let hi = lo * rng.gen_range(1.5..3.0);
            let w = gaussian_noise(rng, n);
            let y = design_butterworth(4, lo, fs, FilterKind::Highpass)?.apply(&w)?;
            design_butterworth(4, hi.min(7500.0), fs, FilterKind::Lowpass)?.apply(&y)?
        }
        "modulated" => {
            let fm = rng.gen_range(2.0..8.0);
            gaussian_noise(rng, n)
                .into_iter()
                .enumerate()
                .map(|(i, v)| v * (1.0 + 0.9 * (2.0 * PI * fm * t(i)).sin()))
                .collect()
        }
        "chatter" => talkers(rng, n, 2)?,
        "babble" => talkers(rng, n, 6)?,
        "car" => {
            let b = brown(rng, n);
            let rumble = design_butterworth(2, 200.0, fs, FilterKind::Lowpass)?.apply(&b)?;
            let rr = rms(&rumble).max(1e-12);
            let f = rng.gen_range(30.0..40.0);
            (0..n)
                .map(|i| {
                    rumble[i] / rr
                        + 0.3
                            * (1..=4)
                                .map(|h| (2.0 * PI * f * h as f64 * t(i)).sin() / h as f64)
                                .sum::<f64>()
                })
                .collect()
        }
        "street" => {
            let mut y = pink(rng, n);
            let yr = rms(&y).max(1e-12);
            y.iter_mut().for_each(|v| *v /= yr);
            let events = (n as f64 / fs * 1.5).ceil() as usize;
            for _ in 0..events {
                let len = (rng.gen_range(0.1..0.4) * fs) as usize;
                let start = rng.gen_range(0..n.saturating_sub(len).max(1));
                let f = rng.gen_range(300.0..600.0);
                for i in 0..len.min(n - start) {
                    let w = (PI * i as f64 / len as f64).sin();
                    y[start + i] += 2.0
                        * w
                        * (1..=5)
                            .map(|h| (2.0 * PI * f * h as f64 * t(i)).sin() / h as f64)
                            .sum::<f64>();
                }
            }
            y
        }
        "engine" => {
            // firing harmonics with a slowly drifting rpm over broadband rumble
            let f0 = rng.gen_range(25.0..50.0);
            let drift = rng.gen_range(0.05..0.2);
            let rate = rng.gen_range(0.1..0.5);
            let w = gaussian_noise(rng, n);
            let band = design_butterworth(2, 100.0, fs, FilterKind::Highpass)?.apply(&w)?;
            let band = design_butterworth(4, 3000.0, fs, FilterKind::Lowpass)?.apply(&band)?;
            let br = rms(&band).max(1e-12);
            let mut phase = 0.0;
            (0..n)
                .map(|i| {
                    let f = f0 * (1.0 + drift * (2.0 * PI * rate * t(i)).sin());
                    phase += 2.0 * PI * f / fs;
                    let tone: f64 = (1..=40).map(|h| (h as f64 * phase).sin() / (h as f64).powf(0.7)).sum();
                    0.5 * tone + (1.0 + 0.5 * phase.sin()) * band[i] / br
                })
                .collect()
        }
        other => return Err(Error::invalid(format!("unknown noise type {other:?}"))),
    };
    let r = rms(&x).max(1e-12);
    x.iter_mut().for_each(|v| *v *= 0.1 / r);
    Waveform::new(x, AUDIO_RATE_HZ)
}

fn pink<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    // Kellet's economy pink filter
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    (0..n)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect()
}

fn brown<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut acc = 0.0;
    let mut y: Vec<f64> = (0..n)
        .map(|_| {
            acc = 0.995 * acc + rng.sample::<f64, _>(StandardNormal);
            acc
        })
        .collect();
    let m = y.iter().sum::<f64>() / n.max(1) as f64;
    y.iter_mut().for_each(|v| *v -= m);
    y
}

/// Overlapping synthetic talkers (fresh voices, never the corpus speakers).
fn talkers<R: Rng>(rng: &mut R, n: usize, count: usize) -> Result<Vec<f64>> {
    let mut y = vec![0.0; n];
    for _ in 0..count {
        let profile = SpeakerProfile::random(rng, 0, 1);
        let mut pos = rng.gen_range(0..n / 4 + 1);
        // fill the buffer with back-to-back utterances from this talker
        let mut filled = 0;
        while filled < n {
            let len = (rng.gen_range(1.0..2.0) * AUDIO_RATE_HZ as f64) as usize;
            let (s, _) = synth_speech(rng, &profile, len)?;
            for v in s {
                y[pos % n] += v;
                pos += 1;
            }
            filled += len;
        }
    }
    Ok(y)
}

/// What [`synth_corpus`] wrote.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub noises: Vec<NoiseEntry>,
    pub train_noise_dir: PathBuf,
    pub test_noise_dir: PathBuf,
}

fn split_of(cfg: &SynthConfig, u: usize) -> Split {
    if u < cfg.train_per_speaker {
        Split::Train
    } else if u < cfg.train_per_speaker + cfg.val_per_speaker {
        Split::Val
    } else {
        Split::Test
    }
}

/// Writes the corpus under `out`: `audio/*.wav`, `emg/*.emgc`,
/// `noise/{train,test}/*.wav` and `manifest.tsv`. Every file derives its
/// own seed from `seed`, so the bytes do not depend on `jobs`.
pub fn synth_corpus(cfg: &SynthConfig, seed: u64, out: &Path, jobs: usize) -> Result<SynthCorpus> {
    cfg.validate()?;
    for sub in ["audio", "emg", "noise/train", "noise/test"] {
        std::fs::create_dir_all(out.join(sub))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;

    let profiles: Vec<SpeakerProfile> = (0..cfg.num_speakers)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["speaker", &format!("s{:02}", s + 1)]));
            SpeakerProfile::random(&mut rng, cfg.cheek_channels, cfg.chin_channels)
        })
        .collect();

    let mut rows = Vec::new();
    for s in 0..cfg.num_speakers {
        for u in 0..cfg.utterances_per_speaker() {
            let id = format!("s{:02}_u{:03}", s + 1, u + 1);
            rows.push(ManifestRow {
                split: split_of(cfg, u),
                audio: PathBuf::from(format!("audio/{id}.wav")),
                emg: PathBuf::from(format!("emg/{id}.emgc")),
                id,
            });
        }
    }
    let lo = (cfg.min_duration_sec * TICKS_PER_SEC).ceil() as usize;
    let hi = ((cfg.max_duration_sec * TICKS_PER_SEC).floor() as usize).max(lo);

    pool.install(|| {
        rows.par_iter().enumerate().try_for_each(|(i, row)| -> Result<()> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["utterance", &row.id]));
            let ticks = rng.gen_range(lo..=hi);
            let profile = &profiles[i / cfg.utterances_per_speaker()];
            let utt = synth_utterance(&mut rng, profile, ticks, cfg.cheek_channels, cfg.chin_channels)?;
            wav_write(&out.join(&row.audio), &utt.audio)?;
            emg_write(&out.join(&row.emg), &utt.emg)
        })
    })?;

    let mut jobs_list = Vec::new();
    for (bank, types, dir) in [
        (NoiseBank::Train, &TRAIN_NOISE_TYPES[..], "noise/train"),
        (NoiseBank::Test, &TEST_NOISE_TYPES[..], "noise/test"),
    ] {
        for kind in types {
            for v in 0..cfg.noise_variants {
                let id = format!("{kind}_{:02}", v + 1);
                jobs_list.push((
                    bank,
                    kind.to_string(),
                    id.clone(),
                    out.join(dir).join(format!("{id}.wav")),
                ));
            }
        }
    }
    let n_noise = (cfg.noise_duration_sec * AUDIO_RATE_HZ as f64) as usize;
    pool.install(|| {
        jobs_list.par_iter().try_for_each(|(_, kind, id, path)| -> Result<()> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["noise", id]));
            wav_write(path, &synth_noise(&mut rng, kind, n_noise)?)
        })
    })?;

    let manifest = Manifest {
        root: out.to_path_buf(),
        rows,
    };
    let manifest_path = out.join("manifest.tsv");
    manifest.write(&manifest_path)?;
    Ok(SynthCorpus {
        manifest,
        manifest_path,
        noises: jobs_list
            .into_iter()
            .map(|(bank, _, id, path)| NoiseEntry { id, bank, path })
            .collect(),
        train_noise_dir: out.join("noise/train"),
        test_noise_dir: out.join("noise/test"),
    })
}
