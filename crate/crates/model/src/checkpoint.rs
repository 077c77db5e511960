//! Binary checkpoint container.
//!
//! ```text
//! "EMGSE\0"  u32 version
//! u32 len    config (TOML, UTF-8)
//! u32 count  blocks: u32 name_len, name, u32 ndim, u64 dims.., f64 data..
//! ```
//! All integers and floats are little-endian. Parameter blocks come first
//! in network order, then the normalizer blocks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use emgse_core::emg::{ChannelSet, EmgFeatureConfig};
use emgse_core::normalize::Normalizer;

use crate::data::FeaturePipeline;
use crate::error::{ModelError, Result};
use crate::network::{NetConfig, Network};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"EMGSE\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Network,
    pub pipeline: FeaturePipeline,
    pub meta: TrainMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    channel_set: ChannelSet,
    audio_norm_epsilon: f64,
    emg_norm_epsilon: Option<f64>,
    best_epoch: usize,
    epochs_run: usize,
    best_val_loss: f64,
    // TOML integers are signed 64-bit
    seed: String,
    net: NetConfig,
    emg_features: EmgFeatureConfig,
}

const AUDIO_MIN: &str = "normalizer.audio.min";
const AUDIO_MAX: &str = "normalizer.audio.max";
const EMG_MIN: &str = "normalizer.emg.min";
const EMG_MAX: &str = "normalizer.emg.max";

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_block(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len() as u32);
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(ModelError::Checkpoint("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| ModelError::Checkpoint("non-UTF-8 text".into()))
    }

    fn block(&mut self) -> Result<(String, Vec<usize>, Vec<f64>)> {
        let name = self.string()?;
        let ndim = self.u32()? as usize;
        if ndim > 4 {
            return Err(ModelError::Checkpoint(format!("block {name} has {ndim} dimensions")));
        }
        let shape: Vec<usize> = (0..ndim)
            .map(|_| self.u64().map(|d| d as usize))
            .collect::<Result<_>>()?;
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let count = count
            .filter(|&c| c <= (self.buf.len() - self.pos) / 8)
            .ok_or_else(|| ModelError::Checkpoint(format!("block {name} exceeds the file")))?;
        let raw = self.take(count * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((name, shape, data))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            channel_set: self.pipeline.channel_set,
            audio_norm_epsilon: self.pipeline.audio_norm.epsilon,
            emg_norm_epsilon: self.pipeline.emg_norm.as_ref().map(|n| n.epsilon),
            best_epoch: self.meta.best_epoch,
            epochs_run: self.meta.epochs_run,
            best_val_loss: self.meta.best_val_loss,
            seed: self.meta.seed.to_string(),
            net: self.net.config.clone(),
            emg_features: self.pipeline.emg,
        };
        let text = toml::to_string(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;

        let tensors = self.net.tensors();
        let mut norms: Vec<(&str, &Vec<f64>)> = vec![
            (AUDIO_MIN, &self.pipeline.audio_norm.min),
            (AUDIO_MAX, &self.pipeline.audio_norm.max),
        ];
        if let Some(n) = &self.pipeline.emg_norm {
            norms.push((EMG_MIN, &n.min));
            norms.push((EMG_MAX, &n.max));
        }

        let mut out = Vec::with_capacity(8 * self.net.num_params() + 4096);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, text.len() as u32);
        out.extend_from_slice(text.as_bytes());
        put_u32(&mut out, (tensors.len() + norms.len()) as u32);
        for (name, shape, data) in &tensors {
            put_block(&mut out, name, shape, data);
        }
        for (name, v) in norms {
            put_block(&mut out, name, &[v.len()], v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(6)? != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint("not an EMGSE checkpoint".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let text = r.string()?;
        let header: Header = toml::from_str(&text).map_err(|e| ModelError::Checkpoint(format!("config: {e}")))?;
        let seed = header
            .seed
            .parse()
            .map_err(|_| ModelError::Checkpoint(format!("bad seed {:?}", header.seed)))?;

        let mut net = Network::zeros(header.net.clone())?;
        let count = r.u32()? as usize;
        let mut blocks = std::collections::BTreeMap::new();
        for _ in 0..count {
            let (name, shape, data) = r.block()?;
            if blocks.insert(name.clone(), (shape, data)).is_some() {
                return Err(ModelError::Checkpoint(format!("duplicate block {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Checkpoint("trailing bytes".into()));
        }

        let expected: Vec<(String, Vec<usize>)> = net.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        for ((name, shape), (_, dst)) in expected.iter().zip(net.tensors_mut()) {
            let (s, data) = blocks
                .remove(name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing parameter block {name}")))?;
            if &s != shape {
                return Err(ModelError::Checkpoint(format!(
                    "{name}: shape {s:?}, expected {shape:?}"
                )));
            }
            dst.copy_from_slice(&data);
        }
        let mut norm = |min: &str, max: &str, eps: f64, dim: usize| -> Result<Normalizer> {
            let (s0, lo) = blocks
                .remove(min)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing {min}")))?;
            let (s1, hi) = blocks
                .remove(max)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing {max}")))?;
            if s0 != [dim] || s1 != [dim] {
                return Err(ModelError::Checkpoint(format!("normalizer {min} has the wrong width")));
            }
            Ok(Normalizer {
                min: lo,
                max: hi,
                epsilon: eps,
            })
        };
        let audio_norm = norm(AUDIO_MIN, AUDIO_MAX, header.audio_norm_epsilon, header.net.audio_dim)?;
        let emg_norm = match header.emg_norm_epsilon {
            Some(eps) => Some(norm(EMG_MIN, EMG_MAX, eps, header.net.emg_dim)?),
            None => None,
        };
        if let Some(extra) = blocks.keys().next() {
            return Err(ModelError::Checkpoint(format!("unexpected block {extra}")));
        }
        if header.net.variant.uses_emg() != emg_norm.is_some() {
            return Err(ModelError::Checkpoint(
                "EMG normalizer presence does not match the variant".into(),
            ));
        }
        Ok(Self {
            net,
            pipeline: FeaturePipeline {
                emg: header.emg_features,
                channel_set: header.channel_set,
                audio_norm,
                emg_norm,
            },
            meta: TrainMeta {
                best_epoch: header.best_epoch,
                epochs_run: header.epochs_run,
                best_val_loss: header.best_val_loss,
                seed,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Variant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(variant: Variant) -> Checkpoint {
        let cfg = NetConfig {
            variant,
            emg_dim: 10,
            audio_dim: 257,
            encoder_hidden: 6,
            encoder_out: 4,
            fusion_dim: 5,
            lstm_hidden: 3,
            ..NetConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let norm = |d: usize| Normalizer {
            min: (0..d).map(|i| -(i as f64) * 0.1).collect(),
            max: (0..d).map(|i| i as f64 + 0.3).collect(),
            epsilon: 1e-12,
        };
        Checkpoint {
            net: Network::init(cfg, &mut rng).unwrap(),
            pipeline: FeaturePipeline {
                emg: EmgFeatureConfig::default(),
                channel_set: ChannelSet::Cheek,
                audio_norm: norm(257),
                emg_norm: variant.uses_emg().then(|| norm(10)),
            },
            meta: TrainMeta {
                best_epoch: 3,
                epochs_run: 18,
                best_val_loss: 0.123_456_789_012_345_67,
                seed: u64::MAX - 5,
            },
        }
    }

    #[test]
    fn round_trip_is_canonical() {
        for v in [Variant::Emgse, Variant::SeA] {
            let ck = sample(v);
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = sample(Variant::Emgse).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
