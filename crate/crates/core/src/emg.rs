//! Surface EMG time-domain features: band split at 134 Hz, five statistics
//! per frame and channel, and ±15-frame context stacking.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dsp::{design_butterworth, FilterKind, FrameClock, FrameTiming, IirFilter};
use crate::error::{Error, Result};
use crate::normalize::Normalizer;

pub const EMG_RATE_HZ: u32 = 2048;
pub const TD_FEATURES: usize = 5;
pub const CHEEK_PREFIX: &str = "cheek";
pub const CHIN_PREFIX: &str = "chin";

/// Multichannel EMG, one row per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EmgRecording {
    pub channels: Array2<f64>,
    pub sample_rate_hz: u32,
    pub channel_ids: Vec<String>,
}

impl EmgRecording {
    pub fn new(channels: Array2<f64>, sample_rate_hz: u32, channel_ids: Vec<String>) -> Result<Self> {
        if channel_ids.len() != channels.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} channels",
                channel_ids.len(),
                channels.nrows()
            )));
        }
        if channels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("EMG samples"));
        }
        if sample_rate_hz == 0 {
            return Err(Error::invalid("EMG sample rate must be positive"));
        }
        Ok(Self {
            channels,
            sample_rate_hz,
            channel_ids,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.channels.nrows()
    }

    pub fn num_samples(&self) -> usize {
        self.channels.ncols()
    }

    /// Row indices of the channels in `set`, in recording order.
    pub fn channel_indices(&self, set: ChannelSet) -> Result<Vec<usize>> {
        match set {
            ChannelSet::Full => Ok((0..self.num_channels()).collect()),
            ChannelSet::Cheek => {
                let idx: Vec<usize> = self
                    .channel_ids
                    .iter()
                    .enumerate()
                    .filter(|(_, id)| id.starts_with(CHEEK_PREFIX))
                    .map(|(i, _)| i)
                    .collect();
                if idx.is_empty() {
                    return Err(Error::invalid("recording has no cheek-labelled channels"));
                }
                Ok(idx)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSet {
    #[default]
    Full,
    Cheek,
}

impl std::str::FromStr for ChannelSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "cheek" => Ok(Self::Cheek),
            other => Err(Error::invalid(format!("unknown channel set {other:?}"))),
        }
    }
}

impl std::fmt::Display for ChannelSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Cheek => "cheek",
        })
    }
}

/// The five time-domain statistics of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdFrame {
    pub low_mean: f64,
    pub low_power: f64,
    pub high_abs_mean: f64,
    pub high_power: f64,
    pub high_zcr: f64,
}

impl TdFrame {
    pub fn to_array(self) -> [f64; TD_FEATURES] {
        [
            self.low_mean,
            self.low_power,
            self.high_abs_mean,
            self.high_power,
            self.high_zcr,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmgFeatureConfig {
    pub timing: FrameTiming,
    pub context_frames: usize,
    pub band_split_hz: f64,
    pub filter_order: usize,
}

impl Default for EmgFeatureConfig {
    fn default() -> Self {
        Self {
            timing: FrameTiming::default(),
            context_frames: 15,
            band_split_hz: 134.0,
            filter_order: 3,
        }
    }
}

impl EmgFeatureConfig {
    pub fn stacked_dim(&self, channels: usize) -> usize {
        channels * (2 * self.context_frames + 1) * TD_FEATURES
    }
}

/// Low/high band pair used to split each channel.
#[derive(Debug, Clone)]
pub struct BandSplitter {
    low: IirFilter,
    high: IirFilter,
}

impl BandSplitter {
    pub fn new(order: usize, cutoff_hz: f64, fs_hz: u32) -> Result<Self> {
        Ok(Self {
            low: design_butterworth(order, cutoff_hz, fs_hz as f64, FilterKind::Lowpass)?,
            high: design_butterworth(order, cutoff_hz, fs_hz as f64, FilterKind::Highpass)?,
        })
    }

    pub fn split(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.low.apply(x)?, self.high.apply(x)?))
    }
}

/// Splits a 2048 Hz channel at 134 Hz with third-order Butterworth filters.
pub fn split_bands(x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg = EmgFeatureConfig::default();
    BandSplitter::new(cfg.filter_order, cfg.band_split_hz, EMG_RATE_HZ)?.split(x)
}

/// Fraction of adjacent pairs whose product is strictly negative.
pub fn zcr(frame: &[f64]) -> Result<f64> {
    if frame.len() < 2 {
        return Err(Error::invalid(format!(
            "zero-crossing rate needs at least 2 samples, got {}",
            frame.len()
        )));
    }
    let crossings = frame.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    Ok(crossings as f64 / (frame.len() - 1) as f64)
}

pub fn td_features(low: &[f64], high: &[f64]) -> Result<TdFrame> {
    if low.len() != high.len() {
        return Err(Error::ShapeMismatch(format!(
            "low band frame has {} samples, high band {}",
            low.len(),
            high.len()
        )));
    }
    let n = low.len() as f64;
    let mut frame = TdFrame {
        low_mean: 0.0,
        low_power: 0.0,
        high_abs_mean: 0.0,
        high_power: 0.0,
        high_zcr: zcr(high)?,
    };
    for (&l, &h) in low.iter().zip(high) {
        frame.low_mean += l;
        frame.low_power += l * l;
        frame.high_abs_mean += h.abs();
        frame.high_power += h * h;
    }
    frame.low_mean /= n;
    frame.low_power /= n;
    frame.high_abs_mean /= n;
    frame.high_power /= n;
    Ok(frame)
}

/// Unstacked features: `frames x (5 * channels)`, channel-major.
pub fn frame_features(
    rec: &EmgRecording,
    channels: &[usize],
    clock: &FrameClock,
    cfg: &EmgFeatureConfig,
) -> Result<Array2<f64>> {
    if clock.sample_rate_hz != rec.sample_rate_hz {
        return Err(Error::SampleRate {
            expected: rec.sample_rate_hz,
            found: clock.sample_rate_hz,
        });
    }
    let splitter = BandSplitter::new(cfg.filter_order, cfg.band_split_hz, rec.sample_rate_hz)?;
    let mut out = Array2::zeros((clock.num_frames, channels.len() * TD_FEATURES));
    let (mut low_buf, mut high_buf) = (Vec::new(), Vec::new());
    for (slot, &c) in channels.iter().enumerate() {
        let row = rec
            .channels
            .row(c)
            .as_slice()
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| rec.channels.row(c).to_vec());
        let (low, high) = splitter.split(&row)?;
        for n in 0..clock.num_frames {
            let td = td_features(clock.frame(&low, n, &mut low_buf), clock.frame(&high, n, &mut high_buf))?;
            for (f, v) in td.to_array().into_iter().enumerate() {
                out[[n, slot * TD_FEATURES + f]] = v;
            }
        }
    }
    Ok(out)
}

/// Stacks `context` frames on each side (zero beyond the edges).
///
/// Output column for channel `c`, offset `o in -K..=K`, feature `f` is
/// `c * (2K+1) * 5 + (o + K) * 5 + f`.
pub fn stack_context(per_frame: ArrayView2<f64>, context: usize) -> Result<Array2<f64>> {
    if per_frame.ncols() % TD_FEATURES != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{} columns is not a multiple of {TD_FEATURES}",
            per_frame.ncols()
        )));
    }
    let channels = per_frame.ncols() / TD_FEATURES;
    let span = 2 * context + 1;
    let frames = per_frame.nrows();
    let mut out = Array2::zeros((frames, channels * span * TD_FEATURES));
    for n in 0..frames {
        let mut row = out.row_mut(n);
        for c in 0..channels {
            for o in 0..span {
                let src = n as isize + o as isize - context as isize;
                if src < 0 || src >= frames as isize {
                    continue;
                }
                let base = c * span * TD_FEATURES + o * TD_FEATURES;
                for f in 0..TD_FEATURES {
                    row[base + f] = per_frame[[src as usize, c * TD_FEATURES + f]];
                }
            }
        }
    }
    Ok(out)
}

/// Full EMG path: band split, framing on the shared clock, TD statistics,
/// context stacking, then optional normalization.
pub fn extract_emg_features(
    rec: &EmgRecording,
    channel_set: ChannelSet,
    normalizer: Option<&Normalizer>,
    cfg: &EmgFeatureConfig,
) -> Result<Array2<f64>> {
    let clock = FrameClock::new(cfg.timing, rec.num_samples(), rec.sample_rate_hz)?;
    extract_emg_features_on(rec, channel_set, normalizer, cfg, &clock)
}

/// As [`extract_emg_features`] but on a caller-supplied clock, e.g. one
/// derived from the co-recorded audio.
pub fn extract_emg_features_on(
    rec: &EmgRecording,
    channel_set: ChannelSet,
    normalizer: Option<&Normalizer>,
    cfg: &EmgFeatureConfig,
    clock: &FrameClock,
) -> Result<Array2<f64>> {
    if rec.sample_rate_hz != EMG_RATE_HZ {
        return Err(Error::SampleRate {
            expected: EMG_RATE_HZ,
            found: rec.sample_rate_hz,
        });
    }
    let channels = rec.channel_indices(channel_set)?;
    let per_frame = frame_features(rec, &channels, &clock.at_rate(rec.sample_rate_hz), cfg)?;
    let mut stacked = stack_context(per_frame.view(), cfg.context_frames)?;
    if let Some(n) = normalizer {
        n.apply_inplace(&mut stacked)?;
    }
    Ok(stacked)
}

/// Channel labels: `cheek01..cheekNN` followed by `chin01..chinMM`.
pub fn default_channel_ids(cheek: usize, chin: usize) -> Vec<String> {
    (1..=cheek)
        .map(|i| format!("{CHEEK_PREFIX}{i:02}"))
        .chain((1..=chin).map(|i| format!("{CHIN_PREFIX}{i:02}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::make_frame_clock;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_recording(channels: usize, samples: usize, seed: u64) -> EmgRecording {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((channels, samples), |_| rng.gen_range(-50.0..50.0));
        EmgRecording::new(data, 2048, default_channel_ids(28, channels - 28)).unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn band_routing() {
        let (low, high) = split_bands(&vec![1.0; 4096]).unwrap();
        assert!((low[4095] - 1.0).abs() < 1e-6);
        assert!(high[4095].abs() < 1e-6);
        let (low, high) = split_bands(&vec![0.0; 100]).unwrap();
        assert!(low.iter().chain(&high).all(|&v| v == 0.0));
    }

    #[test]
    fn sine_at_500_hz_goes_high() {
        let x: Vec<f64> = (0..8192)
            .map(|n| (2.0 * std::f64::consts::PI * 500.0 * n as f64 / 2048.0).sin())
            .collect();
        let (low, high) = split_bands(&x).unwrap();
        let steady = 2048..8192;
        let base = rms(&x[steady.clone()]);
        assert!(rms(&high[steady.clone()]) / base > 0.95);
        assert!(rms(&low[steady]) / base < 0.05);
    }

    #[test]
    fn zcr_examples() {
        assert_eq!(zcr(&[1.0, -1.0, 1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(zcr(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((zcr(&[1.0, 0.0, -1.0, 1.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(zcr(&[1.0]).is_err());
    }

    #[test]
    fn td_examples() {
        let t = td_features(&[0.5; 66], &[0.0; 66]).unwrap();
        assert_eq!(t.to_array(), [0.5, 0.25, 0.0, 0.0, 0.0]);
        let high: Vec<f64> = (0..66).map(|i| if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let t = td_features(&[0.0; 66], &high).unwrap();
        let want = [0.0, 0.0, 0.1, 0.01, 1.0];
        for (g, w) in t.to_array().iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        assert!(td_features(&[0.0; 66], &[0.0; 65]).is_err());
    }

    #[test]
    fn stacked_dims() {
        let cfg = EmgFeatureConfig::default();
        assert_eq!(cfg.stacked_dim(35), 5425);
        assert_eq!(cfg.stacked_dim(28), 4340);
    }

    #[test]
    fn leading_edge_is_zero_padded() {
        let per = Array2::from_shape_fn((20, 10), |(n, c)| 1.0 + n as f64 + c as f64);
        let s = stack_context(per.view(), 15).unwrap();
        assert_eq!(s.dim(), (20, 2 * 31 * 5));
        for c in 0..2 {
            for o in 0..15 {
                for f in 0..5 {
                    assert_eq!(s[[0, c * 155 + o * 5 + f]], 0.0);
                }
            }
            for f in 0..5 {
                assert_eq!(s[[0, c * 155 + 15 * 5 + f]], per[[0, c * 5 + f]]);
            }
        }
    }

    #[test]
    fn one_second_full_and_cheek() {
        let rec = random_recording(35, 2048, 11);
        let cfg = EmgFeatureConfig::default();
        let full = extract_emg_features(&rec, ChannelSet::Full, None, &cfg).unwrap();
        let cheek = extract_emg_features(&rec, ChannelSet::Cheek, None, &cfg).unwrap();
        assert_eq!(full.dim(), (122, 5425));
        assert_eq!(cheek.dim(), (122, 4340));
        // cheek channels are the first 28 blocks of the full extraction
        assert_eq!(cheek, full.slice(ndarray::s![.., ..4340]).to_owned());
        let audio = make_frame_clock(16000, 16000).unwrap();
        assert_eq!(audio.num_frames, full.nrows());
    }

    #[test]
    fn silent_recording() {
        let rec = EmgRecording::new(Array2::zeros((35, 2048)), 2048, default_channel_ids(28, 7)).unwrap();
        let f = extract_emg_features(&rec, ChannelSet::Full, None, &EmgFeatureConfig::default()).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cheek_requires_labels() {
        let rec = EmgRecording::new(Array2::zeros((2, 2048)), 2048, vec!["chin01".into(), "chin02".into()]).unwrap();
        let err = extract_emg_features(&rec, ChannelSet::Cheek, None, &EmgFeatureConfig::default());
        assert!(err.is_err());
    }

    #[test]
    fn wrong_rate_rejected() {
        let rec = EmgRecording::new(Array2::zeros((1, 4000)), 4000, vec!["cheek01".into()]).unwrap();
        assert!(extract_emg_features(&rec, ChannelSet::Full, None, &EmgFeatureConfig::default()).is_err());
    }

    #[test]
    fn channel_permutation_permutes_blocks() {
        let rec = random_recording(30, 1200, 5);
        let cfg = EmgFeatureConfig::default();
        let f = extract_emg_features(&rec, ChannelSet::Full, None, &cfg).unwrap();
        let perm: Vec<usize> = (0..30).rev().collect();
        let shuffled = EmgRecording::new(
            rec.channels.select(ndarray::Axis(0), &perm),
            2048,
            perm.iter().map(|&i| rec.channel_ids[i].clone()).collect(),
        )
        .unwrap();
        let g = extract_emg_features(&shuffled, ChannelSet::Full, None, &cfg).unwrap();
        let block = 155;
        for (dst, &src) in perm.iter().enumerate() {
            assert_eq!(
                g.slice(ndarray::s![.., dst * block..(dst + 1) * block]),
                f.slice(ndarray::s![.., src * block..(src + 1) * block])
            );
        }
    }

    proptest! {
        #[test]
        fn zcr_is_scale_invariant(
            frame in proptest::collection::vec(-10.0f64..10.0, 2..80),
            alpha in 1e-3f64..1e3,
        ) {
            let scaled: Vec<f64> = frame.iter().map(|v| v * alpha).collect();
            prop_assert_eq!(zcr(&frame).unwrap(), zcr(&scaled).unwrap());
        }
    }
}
