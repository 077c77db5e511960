//! Log-magnitude spectral features for the network, and waveform
//! reconstruction from an estimated magnitude plus the noisy phase.

use ndarray::{Array2, ArrayView2};

use crate::dsp::{istft, stft, ComplexSpectrogram, FrameClock};
use crate::error::{Error, Result};
use crate::normalize::Normalizer;
use crate::waveform::Waveform;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFeatures {
    /// `log1p(|X|)`, min-max normalized when a normalizer was supplied.
    pub log_mag: Array2<f64>,
    pub phase: Array2<f64>,
    pub frame_clock: FrameClock,
    pub normalized: bool,
}

pub fn extract_audio_features(x: &Waveform, normalizer: Option<&Normalizer>) -> Result<SpectralFeatures> {
    let spec = stft(x)?;
    let mut log_mag = spec.data.mapv(|c| c.norm().ln_1p());
    if let Some(n) = normalizer {
        n.apply_inplace(&mut log_mag)?;
    }
    Ok(SpectralFeatures {
        log_mag,
        phase: spec.phase(),
        frame_clock: spec.frame_clock,
        normalized: normalizer.is_some(),
    })
}

/// Inverse of the feature path: denormalize, `expm1`, clamp negative
/// magnitudes to zero, attach `phase` and overlap-add.
pub fn reconstruct_waveform(
    enhanced_norm: ArrayView2<f64>,
    phase: ArrayView2<f64>,
    normalizer: &Normalizer,
) -> Result<Waveform> {
    if enhanced_norm.dim() != phase.dim() {
        return Err(Error::ShapeMismatch(format!(
            "magnitude {:?} vs phase {:?}",
            enhanced_norm.dim(),
            phase.dim()
        )));
    }
    if enhanced_norm.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("enhanced spectrogram"));
    }
    let log_mag = normalizer.invert(enhanced_norm)?;
    let mag = log_mag.mapv(|v| v.exp_m1().max(0.0));
    let spec = ComplexSpectrogram::from_polar(&mag, &phase.to_owned())?;
    istft(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::fit_normalizer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn speechy(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f0 = rng.gen_range(100.0..200.0);
        let x = (0..len)
            .map(|n| {
                let t = n as f64 / 16000.0;
                let env = 0.55 + 0.45 * (2.0 * std::f64::consts::PI * 4.0 * t).sin();
                env * (1..20)
                    .map(|h| (2.0 * std::f64::consts::PI * f0 * h as f64 * t).sin() / h as f64)
                    .sum::<f64>()
                    * 0.1
                    + rng.gen_range(-0.01..0.01)
            })
            .collect();
        Waveform::new(x, 16000).unwrap()
    }

    fn interior_rel_rms(x: &[f64], y: &[f64]) -> f64 {
        let (lo, hi) = (256, x.len().min(y.len()) - 256);
        let e: f64 = (lo..hi).map(|i| (x[i] - y[i]).powi(2)).sum();
        let s: f64 = (lo..hi).map(|i| x[i] * x[i]).sum();
        (e / s).sqrt()
    }

    #[test]
    fn zero_waveform_gives_zero_log_mag() {
        let f = extract_audio_features(&Waveform::zeros(4000, 16000), None).unwrap();
        assert!(f.log_mag.iter().all(|&v| v == 0.0));
        assert_eq!(f.log_mag.ncols(), 257);
    }

    #[test]
    fn log1p_identities() {
        assert_eq!(0.0f64.ln_1p(), 0.0);
        assert!(((std::f64::consts::E - 1.0).ln_1p() - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let m: f64 = rng.gen_range(0.0..500.0);
            assert!((m.ln_1p().exp_m1() - m).abs() < 1e-9);
        }
    }

    #[test]
    fn own_features_reconstruct_the_signal() {
        let x = speechy(16000, 1);
        let raw = extract_audio_features(&x, None).unwrap();
        let norm = fit_normalizer([raw.log_mag.view()]).unwrap();
        let f = extract_audio_features(&x, Some(&norm)).unwrap();
        assert!(f.log_mag.iter().all(|v| (0.0..=1.0).contains(v)));
        let y = reconstruct_waveform(f.log_mag.view(), f.phase.view(), &norm).unwrap();
        let rel = interior_rel_rms(x.samples(), y.samples());
        assert!(rel < 1e-5, "{rel}");
        assert!(-20.0 * rel.log10() > 80.0);
    }

    #[test]
    fn pass_through_of_noisy_features() {
        let clean = speechy(12000, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy = Waveform::new(
            clean.samples().iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect(),
            16000,
        )
        .unwrap();
        // normalizer fitted on a different (training) utterance pool
        let train = [clean.clone(), noisy.clone()]
            .iter()
            .map(|w| extract_audio_features(w, None).unwrap().log_mag)
            .collect::<Vec<_>>();
        let norm = fit_normalizer(train.iter().map(|m| m.view())).unwrap();
        let f = extract_audio_features(&noisy, Some(&norm)).unwrap();
        let y = reconstruct_waveform(f.log_mag.view(), f.phase.view(), &norm).unwrap();
        assert!(interior_rel_rms(noisy.samples(), y.samples()) < 1e-5);
    }

    #[test]
    fn zero_enhanced_matrix_is_silent() {
        let x = speechy(8000, 4);
        let raw = extract_audio_features(&x, None).unwrap();
        let mut norm = fit_normalizer([raw.log_mag.view()]).unwrap();
        // a zero point at magnitude zero
        norm.min.iter_mut().for_each(|m| *m = 0.0);
        let zeros = Array2::zeros(raw.log_mag.dim());
        let y = reconstruct_waveform(zeros.view(), raw.phase.view(), &norm).unwrap();
        assert!(y.rms() < 1e-8);
    }

    #[test]
    fn negative_outputs_clamp_to_zero_magnitude() {
        let norm = Normalizer {
            min: vec![0.0; 257],
            max: vec![2.0; 257],
            epsilon: 1e-12,
        };
        let neg = Array2::from_elem((3, 257), -0.75);
        let phase = Array2::zeros((3, 257));
        let y = reconstruct_waveform(neg.view(), phase.view(), &norm).unwrap();
        assert!(y.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let norm = Normalizer {
            min: vec![0.0; 257],
            max: vec![1.0; 257],
            epsilon: 1e-12,
        };
        let a = Array2::zeros((3, 257));
        let b = Array2::zeros((4, 257));
        assert!(reconstruct_waveform(a.view(), b.view(), &norm).is_err());
    }
}
