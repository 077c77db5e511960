//! Binary EMG container.
//!
//! ```text
//! 0   "EMGC"
//! 4   u32 version
//! 8   u32 channel count C
//! 12  u32 sample rate (Hz)
//! 16  u64 samples per channel T
//! 24  C x (u32 byte length, UTF-8 label)
//! ..  C x T f32, channel-major
//! ```
//! All integers and floats little-endian.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::emg::EmgRecording;
use crate::error::{Error, Result};

pub const EMGC_MAGIC: &[u8; 4] = b"EMGC";
pub const EMGC_VERSION: u32 = 1;

pub fn encode_emg(rec: &EmgRecording) -> Vec<u8> {
    let (c, t) = rec.channels.dim();
    let mut out = Vec::with_capacity(24 + c * 16 + c * t * 4);
    out.extend_from_slice(EMGC_MAGIC);
    out.extend_from_slice(&EMGC_VERSION.to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&rec.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(t as u64).to_le_bytes());
    for id in &rec.channel_ids {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    for v in rec.channels.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_emg(bytes: &[u8], path: &Path) -> Result<EmgRecording> {
    let mut cur = Cursor { bytes, pos: 0, path };
    if cur.take(4)? != EMGC_MAGIC {
        return Err(Error::format(path, "bad magic (expected EMGC)"));
    }
    let version = cur.u32()?;
    if version != EMGC_VERSION {
        return Err(Error::Unsupported(format!(
            "{}: EMG container version {version}",
            path.display()
        )));
    }
    let channels = cur.u32()? as usize;
    let rate = cur.u32()?;
    let samples = cur.u64()? as usize;
    let mut ids = Vec::with_capacity(channels);
    for _ in 0..channels {
        let len = cur.u32()? as usize;
        let raw = cur.take(len)?;
        ids.push(String::from_utf8(raw.to_vec()).map_err(|_| Error::format(path, "channel label is not UTF-8"))?);
    }
    let payload = channels
        .checked_mul(samples)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(path, "declared dimensions overflow"))?;
    if bytes.len() - cur.pos != payload {
        return Err(Error::format(
            path,
            format!(
                "declared {channels} x {samples} samples need {payload} bytes, found {}",
                bytes.len() - cur.pos
            ),
        ));
    }
    let data: Vec<f64> = bytes[cur.pos..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let matrix = Array2::from_shape_vec((channels, samples), data).map_err(|e| Error::format(path, e.to_string()))?;
    EmgRecording::new(matrix, rate, ids)
}

pub fn emg_write(path: &Path, rec: &EmgRecording) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_emg(rec))?;
    Ok(())
}

pub fn emg_read(path: &Path) -> Result<EmgRecording> {
    decode_emg(&std::fs::read(path)?, path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.path, "truncated header"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emg::default_channel_ids;

    fn sample() -> EmgRecording {
        let data = Array2::from_shape_fn((3, 10), |(c, t)| (c * 10 + t) as f32 as f64 * 0.5);
        EmgRecording::new(data, 2048, default_channel_ids(2, 1)).unwrap()
    }

    #[test]
    fn round_trip() {
        let rec = sample();
        let bytes = encode_emg(&rec);
        assert_eq!(&bytes[..4], b"EMGC");
        let back = decode_emg(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, rec);
        assert_eq!(encode_emg(&back), bytes);
    }

    #[test]
    fn payload_size_is_checked() {
        let bytes = encode_emg(&sample());
        assert!(decode_emg(&bytes[..bytes.len() - 4], Path::new("m")).is_err());
        let mut longer = bytes.clone();
        longer.extend_from_slice(&[0; 4]);
        assert!(decode_emg(&longer, Path::new("m")).is_err());
        assert!(decode_emg(&bytes[..10], Path::new("m")).is_err());
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(decode_emg(&bad, Path::new("m")).is_err());
    }
}
