use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analysis window and hop, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameTiming {
    pub window_sec: f64,
    pub hop_sec: f64,
}

impl Default for FrameTiming {
    fn default() -> Self {
        Self {
            window_sec: 0.032,
            hop_sec: 0.008,
        }
    }
}

/// Frame grid defined in time, so signals of equal duration at different
/// sample rates get the same number of frames.
///
/// Frame `n` starts at sample `round(n * hop_sec * fs)` and spans
/// `round(window_sec * fs)` samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameClock {
    pub timing: FrameTiming,
    pub sample_rate_hz: u32,
    pub num_frames: usize,
}

// absorbs representation error in e.g. (1.0 - 0.032) / 0.008
const FRAME_COUNT_SLACK: f64 = 1e-9;

impl FrameClock {
    pub fn new(timing: FrameTiming, duration_samples: usize, fs_hz: u32) -> Result<Self> {
        if fs_hz == 0 || !(timing.window_sec > 0.0) || !(timing.hop_sec > 0.0) {
            return Err(Error::invalid("frame timing and sample rate must be positive"));
        }
        let duration = duration_samples as f64 / fs_hz as f64;
        let span = (duration - timing.window_sec) / timing.hop_sec;
        if span < -FRAME_COUNT_SLACK {
            return Err(Error::EmptyClock {
                samples: duration_samples,
                window_sec: timing.window_sec,
            });
        }
        let num_frames = 1 + (span + FRAME_COUNT_SLACK).floor().max(0.0) as usize;
        Ok(Self {
            timing,
            sample_rate_hz: fs_hz,
            num_frames,
        })
    }

    /// The same frame grid expressed at another sample rate.
    pub fn at_rate(&self, fs_hz: u32) -> Self {
        Self {
            sample_rate_hz: fs_hz,
            ..*self
        }
    }

    pub fn window_len(&self) -> usize {
        (self.timing.window_sec * self.sample_rate_hz as f64).round() as usize
    }

    pub fn frame_start(&self, n: usize) -> usize {
        (n as f64 * self.timing.hop_sec * self.sample_rate_hz as f64).round() as usize
    }

    /// Copies frame `n` of `x`, zero-filling anything past the end.
    pub fn frame<'a>(&self, x: &'a [f64], n: usize, buf: &'a mut Vec<f64>) -> &'a [f64] {
        let start = self.frame_start(n);
        let len = self.window_len();
        if start + len <= x.len() {
            return &x[start..start + len];
        }
        buf.clear();
        buf.resize(len, 0.0);
        if start < x.len() {
            let avail = x.len() - start;
            buf[..avail].copy_from_slice(&x[start..]);
        }
        buf
    }
}

/// Frame clock with the default 32 ms / 8 ms timing.
pub fn make_frame_clock(duration_samples: usize, fs_hz: u32) -> Result<FrameClock> {
    FrameClock::new(FrameTiming::default(), duration_samples, fs_hz)
}
