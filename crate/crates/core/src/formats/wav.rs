//! 16-bit PCM mono WAV, samples scaled by 1/32768.

use std::path::Path;

use hound::{SampleFormat, WavSpec};

use crate::error::{Error, Result};
use crate::waveform::Waveform;

const FULL_SCALE: f64 = 32768.0;

pub fn wav_read(path: &Path) -> Result<Waveform> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Unsupported(format!(
            "{}: {:?} {}-bit samples (expected 16-bit PCM)",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(Error::Unsupported(format!(
            "{}: {} channels (expected mono)",
            path.display(),
            spec.channels
        )));
    }
    let declared = reader.len() as usize;
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    if samples.len() != declared {
        return Err(Error::format(path, "payload shorter than declared data chunk"));
    }
    Waveform::new(samples, spec.sample_rate)
}

/// Writes 16-bit PCM, clamping to `[-1, 1 - 2^-15]`.
pub fn wav_write(path: &Path, wave: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in wave.samples() {
        writer.write_sample(quantize(s)).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

pub fn quantize(s: f64) -> i16 {
    (s * FULL_SCALE).round().clamp(-FULL_SCALE, FULL_SCALE - 1.0) as i16
}

/// Rounds to the nearest representable 16-bit sample.
pub fn quantized(wave: &Waveform) -> Waveform {
    let q = wave
        .samples()
        .iter()
        .map(|&s| quantize(s) as f64 / FULL_SCALE)
        .collect();
    Waveform::new(q, wave.sample_rate_hz()).expect("quantized samples are finite")
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() != std::io::ErrorKind::UnexpectedEof => Error::Io(io),
        hound::Error::Unsupported => Error::Unsupported(format!("{}: unsupported WAV encoding", path.display())),
        other => Error::format(path, other.to_string()),
    }
}
