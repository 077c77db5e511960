//! Noisy-mixture datasets: SNR-controlled mixing, noise length matching and
//! the seeded train/val/test mixture index.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{read_jsonl, write_jsonl, Manifest};
use crate::waveform::Waveform;

pub const INDEX_VERSION: u32 = 1;
const SILENCE_RMS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseBank {
    /// Shared by the train and validation splits.
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseEntry {
    pub id: String,
    pub bank: NoiseBank,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceEntry {
    pub id: String,
    pub split: Split,
    pub audio: PathBuf,
    pub emg: PathBuf,
}

/// One noisy mixture: which clean utterance, which noise, at what SNR, and
/// the seed that fixes the noise crop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub id: String,
    pub clean_id: String,
    pub noise_id: String,
    pub snr_db: f64,
    pub rng_seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// SNRs for the train and validation mixtures.
    pub train_snrs_db: Vec<f64>,
    pub test_snrs_db: Vec<f64>,
    /// Noise types drawn (without replacement) per train/val utterance.
    pub noises_per_utterance: usize,
    /// Test noises per utterance; `None` uses the whole test bank.
    pub test_noises_per_utterance: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            train_snrs_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
            test_snrs_db: vec![-11.0, -4.0, -1.0, 4.0],
            noises_per_utterance: 5,
            test_noises_per_utterance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetIndex {
    pub seed: u64,
    pub utterances: Vec<UtteranceEntry>,
    pub noises: Vec<NoiseEntry>,
    pub mixtures: Vec<MixSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum IndexRecord {
    Header {
        version: u32,
        seed: u64,
        split_sizes: BTreeMap<Split, usize>,
        mixtures: usize,
    },
    Utterance(UtteranceEntry),
    Noise(NoiseEntry),
    Mixture(MixSpec),
}

impl DatasetIndex {
    pub fn split_sizes(&self) -> BTreeMap<Split, usize> {
        let mut sizes = BTreeMap::new();
        for u in &self.utterances {
            *sizes.entry(u.split).or_insert(0) += 1;
        }
        sizes
    }

    pub fn mixtures_in(&self, split: Split) -> impl Iterator<Item = &MixSpec> {
        self.mixtures.iter().filter(move |m| m.split == split)
    }

    pub fn utterance(&self, id: &str) -> Result<&UtteranceEntry> {
        self.utterances
            .iter()
            .find(|u| u.id == id)
            .ok_or_else(|| Error::Dataset(format!("unknown utterance {id}")))
    }

    pub fn noise(&self, id: &str) -> Result<&NoiseEntry> {
        self.noises
            .iter()
            .find(|n| n.id == id)
            .ok_or_else(|| Error::Dataset(format!("unknown noise {id}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut records = vec![IndexRecord::Header {
            version: INDEX_VERSION,
            seed: self.seed,
            split_sizes: self.split_sizes(),
            mixtures: self.mixtures.len(),
        }];
        records.extend(self.utterances.iter().cloned().map(IndexRecord::Utterance));
        records.extend(self.noises.iter().cloned().map(IndexRecord::Noise));
        records.extend(self.mixtures.iter().cloned().map(IndexRecord::Mixture));
        write_jsonl(path, &records)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let records: Vec<IndexRecord> = read_jsonl(path)?;
        let mut index = DatasetIndex::default();
        let mut saw_header = false;
        for r in records {
            match r {
                IndexRecord::Header { version, seed, .. } => {
                    if version != INDEX_VERSION {
                        return Err(Error::Unsupported(format!("dataset index version {version}")));
                    }
                    index.seed = seed;
                    saw_header = true;
                }
                IndexRecord::Utterance(u) => index.utterances.push(u),
                IndexRecord::Noise(n) => index.noises.push(n),
                IndexRecord::Mixture(m) => index.mixtures.push(m),
            }
        }
        if !saw_header {
            return Err(Error::format(path, "missing header record"));
        }
        Ok(index)
    }
}

/// `clean + g * noise` with `g` chosen so the full-utterance power ratio is
/// exactly `snr_db`.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Waveform> {
    Ok(mix_gain(clean, noise, snr_db)?.0)
}

/// As [`mix_at_snr`], also returning the applied noise gain.
pub fn mix_gain(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<(Waveform, f64)> {
    if !snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite"));
    }
    if clean.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(Error::SampleRate {
            expected: clean.sample_rate_hz(),
            found: noise.sample_rate_hz(),
        });
    }
    if clean.len() != noise.len() {
        return Err(Error::ShapeMismatch(format!(
            "clean has {} samples, noise {} (length-match the noise first)",
            clean.len(),
            noise.len()
        )));
    }
    let (rc, rn) = (clean.rms(), noise.rms());
    if rc < SILENCE_RMS {
        return Err(Error::Silent("clean utterance".into()));
    }
    if rn < SILENCE_RMS {
        return Err(Error::Silent("noise".into()));
    }
    let g = rc / rn * 10f64.powf(-snr_db / 20.0);
    let mixed = clean
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(c, n)| c + g * n)
        .collect();
    Ok((Waveform::new(mixed, clean.sample_rate_hz())?, g))
}

/// Crops (or loops, then crops) `noise` to `target_len` samples at a
/// uniformly random offset.
pub fn prepare_noise<R: Rng>(noise: &Waveform, target_len: usize, rng: &mut R) -> Result<Waveform> {
    let src = noise.samples();
    if src.is_empty() {
        return Err(Error::invalid("noise recording is empty"));
    }
    let out: Vec<f64> = if src.len() >= target_len {
        let start = rng.gen_range(0..=src.len() - target_len);
        src[start..start + target_len].to_vec()
    } else {
        let start = rng.gen_range(0..src.len());
        (0..target_len).map(|i| src[(start + i) % src.len()]).collect()
    };
    Waveform::new(out, noise.sample_rate_hz())
}

/// Materializes one mixture from its clean utterance and raw noise.
pub fn render_mixture(spec: &MixSpec, clean: &Waveform, noise: &Waveform) -> Result<Waveform> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let matched = prepare_noise(noise, clean.len(), &mut rng)?;
    mix_at_snr(clean, &matched, spec.snr_db)
}

/// Expands a manifest and two disjoint noise banks into the mixture index.
///
/// Train and validation utterances each get `noises_per_utterance` distinct
/// train-bank noises at every train SNR; test utterances get test-bank
/// noises at every test SNR.
pub fn build_dataset(
    manifest: &Manifest,
    noises: &[NoiseEntry],
    cfg: &DatasetConfig,
    seed: u64,
) -> Result<DatasetIndex> {
    let train_bank: Vec<&NoiseEntry> = noises.iter().filter(|n| n.bank == NoiseBank::Train).collect();
    let test_bank: Vec<&NoiseEntry> = noises.iter().filter(|n| n.bank == NoiseBank::Test).collect();
    check_disjoint(&train_bank, &test_bank)?;

    let mut mixtures = Vec::new();
    for row in &manifest.rows {
        let (bank, snrs, count) = match row.split {
            Split::Train | Split::Val => (&train_bank, &cfg.train_snrs_db, Some(cfg.noises_per_utterance)),
            Split::Test => (&test_bank, &cfg.test_snrs_db, cfg.test_noises_per_utterance),
        };
        if bank.is_empty() {
            return Err(Error::Dataset(format!(
                "no noise available for {} utterance {}",
                row.split, row.id
            )));
        }
        let count = count.unwrap_or(bank.len());
        if count == 0 || count > bank.len() {
            return Err(Error::Dataset(format!(
                "cannot draw {count} distinct noises from a bank of {}",
                bank.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["select", &row.id]));
        let mut chosen: Vec<&NoiseEntry> = bank.choose_multiple(&mut rng, count).copied().collect();
        chosen.sort_by(|a, b| a.id.cmp(&b.id));
        for noise in chosen {
            for &snr in snrs {
                let id = format!("{}__{}__{}dB", row.id, noise.id, fmt_snr(snr));
                mixtures.push(MixSpec {
                    rng_seed: derive_seed(seed, &["mix", &id]),
                    id,
                    clean_id: row.id.clone(),
                    noise_id: noise.id.clone(),
                    snr_db: snr,
                    split: row.split,
                });
            }
        }
    }

    let mut used: Vec<NoiseEntry> = noises.to_vec();
    used.sort_by(|a, b| (a.bank, &a.id).cmp(&(b.bank, &b.id)));
    Ok(DatasetIndex {
        seed,
        utterances: manifest
            .rows
            .iter()
            .map(|r| UtteranceEntry {
                id: r.id.clone(),
                split: r.split,
                audio: manifest.audio_path(r),
                emg: manifest.emg_path(r),
            })
            .collect(),
        noises: used,
        mixtures,
    })
}

fn check_disjoint(train: &[&NoiseEntry], test: &[&NoiseEntry]) -> Result<()> {
    let key = |n: &NoiseEntry| {
        (
            n.id.clone(),
            std::fs::canonicalize(&n.path).unwrap_or_else(|_| n.path.clone()),
        )
    };
    let train_ids: BTreeSet<String> = train.iter().map(|n| key(n).0).collect();
    let train_paths: BTreeSet<PathBuf> = train.iter().map(|n| key(n).1).collect();
    for n in test {
        let (id, path) = key(n);
        if train_ids.contains(&id) || train_paths.contains(&path) {
            return Err(Error::Dataset(format!(
                "noise {id} ({}) appears in both the train and test banks",
                n.path.display()
            )));
        }
    }
    Ok(())
}

fn fmt_snr(snr: f64) -> String {
    if snr.fract() == 0.0 {
        format!("{:+}", snr as i64)
    } else {
        format!("{snr:+}")
    }
}

/// Seed derived from a master seed and a label path (FNV-1a then
/// SplitMix64 finalization), independent of iteration order.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ master;
    for p in parts {
        for b in p.bytes().chain(std::iter::once(0xff)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    splitmix64(h)
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
