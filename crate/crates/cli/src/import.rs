//! Importer for raw array-EMG corpora.
//!
//! Source layout:
//!
//! ```text
//! <src>/utterances.tsv   id <TAB> split        (header line "id\tsplit")
//! <src>/audio/<id>.wav   16 kHz mono 16-bit PCM
//! <src>/emg/<id>.f32     little-endian f32, frame-interleaved, `raw_channels`
//!                        channels at 2048 Hz
//! ```
//!
//! Raw channels `0..cheek_channels` come from the cheek array and the rest
//! from the chin array. Excluded channels are dropped, the remainder is
//! relabelled `cheekNN` / `chinNN` in order and written as EMGC containers
//! next to re-encoded audio and a `manifest.tsv`.

use std::path::{Path, PathBuf};

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use emgse_core::dataset::Split;
use emgse_core::emg::{EmgRecording, CHEEK_PREFIX, CHIN_PREFIX, EMG_RATE_HZ};
use emgse_core::formats::manifest::{Manifest, ManifestRow};
use emgse_core::formats::{emg_write, wav_read, wav_write};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImportConfig {
    pub raw_channels: usize,
    /// Raw channels `0..cheek_channels` belong to the cheek array.
    pub cheek_channels: usize,
    /// Zero-based raw channel indices to drop.
    pub exclude_channels: Vec<usize>,
    /// Channel count required after exclusion.
    pub expected_channels: usize,
}

impl Default for ImportConfig {
    fn default() -> Self {
        Self {
            raw_channels: 40,
            cheek_channels: 32,
            exclude_channels: vec![7, 15, 23, 31, 39],
            expected_channels: 35,
        }
    }
}

impl ImportConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cheek_channels > self.raw_channels {
            return Err(CliError::Config("import.cheek_channels exceeds raw_channels".into()));
        }
        let mut seen = vec![false; self.raw_channels];
        for &c in &self.exclude_channels {
            match seen.get_mut(c) {
                None => return Err(CliError::Config(format!("excluded channel {c} does not exist"))),
                Some(true) => return Err(CliError::Config(format!("channel {c} excluded twice"))),
                Some(s) => *s = true,
            }
        }
        Ok(())
    }

    /// Retained raw indices with their labels.
    pub fn retained(&self) -> Result<Vec<(usize, String)>> {
        self.validate()?;
        let mut cheek = 0;
        let mut chin = 0;
        let mut out = Vec::new();
        for c in (0..self.raw_channels).filter(|c| !self.exclude_channels.contains(c)) {
            if c < self.cheek_channels {
                cheek += 1;
                out.push((c, format!("{CHEEK_PREFIX}{cheek:02}")));
            } else {
                chin += 1;
                out.push((c, format!("{CHIN_PREFIX}{chin:02}")));
            }
        }
        if out.len() != self.expected_channels {
            return Err(CliError::Import(format!(
                "{} channels remain after exclusion, expected {}",
                out.len(),
                self.expected_channels
            )));
        }
        Ok(out)
    }
}

/// Reads one raw EMG file and keeps the retained channels.
pub fn read_raw_emg(path: &Path, cfg: &ImportConfig) -> Result<EmgRecording> {
    let keep = cfg.retained()?;
    let bytes = std::fs::read(path)?;
    let frame = 4 * cfg.raw_channels;
    if bytes.is_empty() || bytes.len() % frame != 0 {
        return Err(CliError::Import(format!(
            "{}: {} bytes is not a whole number of {}-channel frames",
            path.display(),
            bytes.len(),
            cfg.raw_channels
        )));
    }
    let t = bytes.len() / frame;
    let mut x = Array2::zeros((keep.len(), t));
    for (k, chunk) in bytes.chunks_exact(frame).enumerate() {
        for (row, (c, _)) in keep.iter().enumerate() {
            let b = &chunk[4 * c..4 * c + 4];
            x[[row, k]] = f32::from_le_bytes(b.try_into().unwrap()) as f64;
        }
    }
    let labels = keep.into_iter().map(|(_, l)| l).collect();
    Ok(EmgRecording::new(x, EMG_RATE_HZ, labels)?)
}

fn read_utterance_list(path: &Path) -> Result<Vec<(String, Split)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Import(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "id\tsplit" => {}
        _ => {
            return Err(CliError::Import(format!(
                "{}: expected header \"id<TAB>split\"",
                path.display()
            )))
        }
    }
    lines
        .map(|l| {
            let (id, split) = l
                .split_once('\t')
                .ok_or_else(|| CliError::Import(format!("malformed line {l:?}")))?;
            Ok((id.to_string(), split.trim().parse()?))
        })
        .collect()
}

/// Imports `src` into `out` and returns the written manifest. Utterances
/// whose EMG file is missing are skipped with a warning.
pub fn import_corpus(src: &Path, out: &Path, cfg: &ImportConfig) -> Result<Manifest> {
    cfg.retained()?;
    let list = read_utterance_list(&src.join("utterances.tsv"))?;
    std::fs::create_dir_all(out.join("audio"))?;
    std::fs::create_dir_all(out.join("emg"))?;
    let mut rows = Vec::new();
    for (id, split) in list {
        let raw = src.join("emg").join(format!("{id}.f32"));
        if !raw.exists() {
            warn!("skipping {id}: no EMG file at {}", raw.display());
            continue;
        }
        let audio = wav_read(&src.join("audio").join(format!("{id}.wav")))?;
        let emg = read_raw_emg(&raw, cfg)?;
        let row = ManifestRow {
            audio: PathBuf::from(format!("audio/{id}.wav")),
            emg: PathBuf::from(format!("emg/{id}.emgc")),
            id,
            split,
        };
        wav_write(&out.join(&row.audio), &audio)?;
        emg_write(&out.join(&row.emg), &emg)?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Import("no utterances imported".into()));
    }
    let manifest = Manifest {
        root: out.to_path_buf(),
        rows,
    };
    manifest.write(&out.join("manifest.tsv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_keeps_28_cheek_and_7_chin() {
        let kept = ImportConfig::default().retained().unwrap();
        assert_eq!(kept.len(), 35);
        assert_eq!(kept.iter().filter(|(_, l)| l.starts_with("cheek")).count(), 28);
        assert_eq!(kept.iter().filter(|(_, l)| l.starts_with("chin")).count(), 7);
        assert_eq!(kept[7], (8, "cheek08".to_string()));
        assert_eq!(kept.last().unwrap(), &(38, "chin07".to_string()));
    }

    #[test]
    fn bad_exclusions_rejected() {
        let cfg = ImportConfig {
            exclude_channels: vec![1, 1, 2, 3, 4],
            ..ImportConfig::default()
        };
        assert!(cfg.retained().is_err());
        let cfg = ImportConfig {
            exclude_channels: vec![40],
            ..ImportConfig::default()
        };
        assert!(cfg.retained().is_err());
        let cfg = ImportConfig {
            exclude_channels: vec![0, 1, 2, 3],
            ..ImportConfig::default()
        };
        assert!(cfg.retained().is_err());
    }
}
