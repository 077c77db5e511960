//! STFT with a symmetric Blackman window and its weighted overlap-add
//! inverse.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::frame::{make_frame_clock, FrameClock};
use super::window::blackman;
use crate::error::{Error, Result};
use crate::waveform::Waveform;

pub const AUDIO_RATE_HZ: u32 = 16_000;
pub const FFT_SIZE: usize = 512;
pub const HOP: usize = 128;
pub const NUM_BINS: usize = FFT_SIZE / 2 + 1;

// below this the synthesis normalizer is treated as zero
const WOLA_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    /// frames x bins
    pub data: Array2<Complex64>,
    pub frame_clock: FrameClock,
    pub fft_size: usize,
}

impl ComplexSpectrogram {
    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.data.mapv(|c| c.norm())
    }

    pub fn phase(&self) -> Array2<f64> {
        self.data.mapv(|c| c.arg())
    }

    /// Builds `m e^{jφ}` from magnitude and phase matrices.
    pub fn from_polar(magnitude: &Array2<f64>, phase: &Array2<f64>) -> Result<Self> {
        if magnitude.dim() != phase.dim() {
            return Err(Error::ShapeMismatch(format!(
                "magnitude {:?} vs phase {:?}",
                magnitude.dim(),
                phase.dim()
            )));
        }
        if magnitude.ncols() != NUM_BINS {
            return Err(Error::ShapeMismatch(format!(
                "expected {NUM_BINS} bins, found {}",
                magnitude.ncols()
            )));
        }
        let frames = magnitude.nrows();
        if frames == 0 {
            return Err(Error::ShapeMismatch("spectrogram has no frames".into()));
        }
        let mut data = Array2::zeros((frames, NUM_BINS));
        ndarray::Zip::from(&mut data)
            .and(magnitude)
            .and(phase)
            .for_each(|d, &m, &p| *d = Complex64::from_polar(m, p));
        Ok(Self {
            data,
            frame_clock: FrameClock {
                num_frames: frames,
                ..make_frame_clock(FFT_SIZE, AUDIO_RATE_HZ)?
            },
            fft_size: FFT_SIZE,
        })
    }
}

pub fn stft(x: &Waveform) -> Result<ComplexSpectrogram> {
    if x.sample_rate_hz() != AUDIO_RATE_HZ {
        return Err(Error::SampleRate {
            expected: AUDIO_RATE_HZ,
            found: x.sample_rate_hz(),
        });
    }
    let clock = make_frame_clock(x.len(), AUDIO_RATE_HZ)?;
    let window = blackman(FFT_SIZE)?;
    let fft = FftPlanner::new().plan_fft_forward(FFT_SIZE);
    let samples = x.samples();

    let mut data = Array2::zeros((clock.num_frames, NUM_BINS));
    let mut buf = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
    let mut pad = Vec::new();
    for (n, mut row) in data.rows_mut().into_iter().enumerate() {
        let frame = clock.frame(samples, n, &mut pad);
        for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex64::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        row.iter_mut().zip(&buf).for_each(|(r, &b)| *r = b);
    }
    Ok(ComplexSpectrogram {
        data,
        frame_clock: clock,
        fft_size: FFT_SIZE,
    })
}

/// Inverse STFT by weighted overlap-add with the analysis window and
/// window-squared normalization. Output has `(frames - 1) * hop + fft_size`
/// samples; positions where the squared-window sum is negligible are zero.
pub fn istft(spec: &ComplexSpectrogram) -> Result<Waveform> {
    if spec.fft_size != FFT_SIZE || spec.data.ncols() != NUM_BINS {
        return Err(Error::ShapeMismatch(format!(
            "expected fft size {FFT_SIZE} with {NUM_BINS} bins"
        )));
    }
    let frames = spec.num_frames();
    if frames == 0 {
        return Err(Error::ShapeMismatch("spectrogram has no frames".into()));
    }
    let window = blackman(FFT_SIZE)?;
    let ifft = FftPlanner::new().plan_fft_inverse(FFT_SIZE);
    let out_len = (frames - 1) * HOP + FFT_SIZE;
    let mut acc = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
    let scale = 1.0 / FFT_SIZE as f64;

    for (n, row) in spec.data.rows().into_iter().enumerate() {
        // Hermitian extension; DC and Nyquist are forced real
        for k in 0..NUM_BINS {
            buf[k] = row[k];
        }
        buf[0].im = 0.0;
        buf[NUM_BINS - 1].im = 0.0;
        for k in NUM_BINS..FFT_SIZE {
            buf[k] = row[FFT_SIZE - k].conj();
        }
        ifft.process(&mut buf);
        let start = n * HOP;
        for (i, (&w, b)) in window.iter().zip(&buf).enumerate() {
            acc[start + i] += w * b.re * scale;
            norm[start + i] += w * w;
        }
    }
    let out = acc
        .iter()
        .zip(&norm)
        .map(|(&a, &d)| if d < WOLA_FLOOR { 0.0 } else { a / d })
        .collect();
    Waveform::new(out, AUDIO_RATE_HZ)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16000).unwrap()
    }

    fn interior_error(x: &[f64], y: &[f64]) -> (f64, f64) {
        let lo = FFT_SIZE / 2;
        let hi = y.len().min(x.len()) - FFT_SIZE / 2;
        let mut max_abs: f64 = 0.0;
        let (mut e, mut s) = (0.0, 0.0);
        for i in lo..hi {
            let d = x[i] - y[i];
            max_abs = max_abs.max(d.abs());
            e += d * d;
            s += x[i] * x[i];
        }
        (max_abs, (e / s).sqrt())
    }

    #[test]
    fn zero_signal() {
        let s = stft(&Waveform::zeros(16000, 16000)).unwrap();
        assert_eq!(s.data.dim(), (122, 257));
        assert!(s.data.iter().all(|c| c.norm() == 0.0));
        let y = istft(&s).unwrap();
        assert!(y.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_wrong_rate() {
        let x = Waveform::zeros(2048, 2048);
        assert!(matches!(stft(&x), Err(Error::SampleRate { .. })));
    }

    #[test]
    fn bin_centred_sine() {
        let k = 20;
        let f = k as f64 * 16000.0 / 512.0;
        let x: Vec<f64> = (0..16000)
            .map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / 16000.0).sin())
            .collect();
        let s = stft(&Waveform::new(x, 16000).unwrap()).unwrap();
        let sum_w: f64 = blackman(512).unwrap().iter().sum();
        let mag = s.magnitude();
        for row in mag.rows() {
            let peak = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(peak, k);
            assert!((row[k] / (sum_w / 2.0) - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn linear_in_the_signal() {
        let x = noise(4000, 1);
        let y = noise(4000, 2);
        let (alpha, beta) = (2.0, -0.75);
        let mix: Vec<f64> = x
            .samples()
            .iter()
            .zip(y.samples())
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let sx = stft(&x).unwrap();
        let sy = stft(&y).unwrap();
        let sm = stft(&Waveform::new(mix, 16000).unwrap()).unwrap();
        let doubled = stft(&x.scaled(2.0)).unwrap();
        for ((m, a), b) in sm.data.iter().zip(&sx.data).zip(&sy.data) {
            let want = a * alpha + b * beta;
            assert!((m - want).norm() <= 1e-9 * want.norm().max(1.0));
        }
        for (d, a) in doubled.data.iter().zip(&sx.data) {
            assert_eq!(*d, a * 2.0);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let x = noise(2048, 3);
        let window = blackman(512).unwrap();
        let fft = FftPlanner::new().plan_fft_forward(512);
        let clock = make_frame_clock(x.len(), 16000).unwrap();
        let mut pad = Vec::new();
        for n in 0..clock.num_frames {
            let frame = clock.frame(x.samples(), n, &mut pad);
            let mut buf: Vec<Complex64> = frame
                .iter()
                .zip(&window)
                .map(|(s, w)| Complex64::new(s * w, 0.0))
                .collect();
            let time: f64 = buf.iter().map(|c| c.norm_sqr()).sum();
            fft.process(&mut buf);
            let freq: f64 = buf.iter().map(|c| c.norm_sqr()).sum::<f64>() / 512.0;
            assert!((time - freq).abs() <= 1e-6 * time);
        }
    }

    #[test]
    fn white_noise_round_trip() {
        let x = noise(16000, 4);
        let y = istft(&stft(&x).unwrap()).unwrap();
        let (max_abs, _) = interior_error(x.samples(), y.samples());
        assert!(max_abs < 1e-6, "{max_abs}");
    }

    #[test]
    fn speech_shaped_round_trip_snr() {
        // harmonic series under a 4 Hz envelope
        let x: Vec<f64> = (0..16000)
            .map(|n| {
                let t = n as f64 / 16000.0;
                let env = 0.5 + 0.5 * (2.0 * std::f64::consts::PI * 4.0 * t).sin();
                env * (1..12)
                    .map(|h| (2.0 * std::f64::consts::PI * 140.0 * h as f64 * t).sin() / h as f64)
                    .sum::<f64>()
            })
            .collect();
        let y = istft(&stft(&Waveform::new(x.clone(), 16000).unwrap()).unwrap()).unwrap();
        let (_, rel) = interior_error(&x, y.samples());
        let snr = -20.0 * rel.log10();
        assert!(snr > 100.0, "{snr}");
    }

    #[test]
    fn from_polar_rejects_mismatch() {
        let m = Array2::zeros((3, 257));
        let p = Array2::zeros((3, 256));
        assert!(ComplexSpectrogram::from_polar(&m, &p).is_err());
    }
}
