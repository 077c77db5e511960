use std::path::Path;

use ndarray::Array2;
use proptest::prelude::*;

use emgse_core::dataset::mix_at_snr;
use emgse_core::dsp::{design_butterworth, istft, stft, FilterKind, FFT_SIZE};
use emgse_core::emg::{default_channel_ids, stack_context, EmgRecording, TD_FEATURES};
use emgse_core::formats::emgc::{decode_emg, encode_emg};
use emgse_core::metrics::{si_sdr, stoi};
use emgse_core::Waveform;

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn signal(seed: u64, n: usize, amp: f64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| amp * rng.gen_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixing_hits_the_requested_snr(seed in any::<u64>(), n in 200usize..4000, snr in -30.0f64..30.0, amp in 1e-3f64..10.0) {
        let clean = Waveform::new(signal(seed, n, amp), 16000).unwrap();
        let noise = Waveform::new(signal(seed ^ 1, n, 1.0), 16000).unwrap();
        let mixed = mix_at_snr(&clean, &noise, snr).unwrap();
        let resid: Vec<f64> = mixed.samples().iter().zip(clean.samples()).map(|(m, c)| m - c).collect();
        let got = 10.0 * (power(clean.samples()) / power(&resid)).log10();
        prop_assert!((got - snr).abs() < 1e-9);
    }

    #[test]
    fn butterworth_pair_is_power_complementary(order in 1usize..6, cutoff in 20.0f64..900.0, f in 0.0f64..1024.0) {
        let lp = design_butterworth(order, cutoff, 2048.0, FilterKind::Lowpass).unwrap();
        let hp = design_butterworth(order, cutoff, 2048.0, FilterKind::Highpass).unwrap();
        prop_assert!(lp.is_stable() && hp.is_stable());
        let sum = lp.magnitude(f).powi(2) + hp.magnitude(f).powi(2);
        prop_assert!((sum - 1.0).abs() < 1e-9, "{sum}");
    }

    #[test]
    fn stft_round_trip_in_the_interior(seed in any::<u64>(), n in 1200usize..6000) {
        let x = signal(seed, n, 1.0);
        let y = istft(&stft(&Waveform::new(x.clone(), 16000).unwrap()).unwrap()).unwrap();
        let hi = n.min(y.len()) - FFT_SIZE / 2;
        for i in FFT_SIZE / 2..hi {
            prop_assert!((x[i] - y.samples()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn stacking_keeps_the_centre_frame(t in 1usize..40, channels in 1usize..5, k in 0usize..6, seed in any::<u64>()) {
        let x = Array2::from_shape_vec((t, channels * TD_FEATURES), signal(seed, t * channels * TD_FEATURES, 1.0)).unwrap();
        let s = stack_context(x.view(), k).unwrap();
        let span = 2 * k + 1;
        prop_assert_eq!(s.dim(), (t, channels * span * TD_FEATURES));
        for n in 0..t {
            for c in 0..channels {
                for f in 0..TD_FEATURES {
                    prop_assert_eq!(s[[n, c * span * TD_FEATURES + k * TD_FEATURES + f]], x[[n, c * TD_FEATURES + f]]);
                }
            }
        }
        // one zero block per missing neighbour
        let zeros = s.iter().filter(|v| **v == 0.0).count();
        let missing: usize = (0..t).map(|n| (0..span).filter(|o| (n + o) < k || (n + o) >= t + k).count()).sum();
        prop_assert_eq!(zeros, missing * channels * TD_FEATURES);
    }

    #[test]
    fn emgc_round_trip_is_exact_for_f32_values(seed in any::<u64>(), cheek in 1usize..4, chin in 0usize..3, t in 1usize..300) {
        let c = cheek + chin;
        let data: Vec<f64> = signal(seed, c * t, 100.0).into_iter().map(|v| v as f32 as f64).collect();
        let rec = EmgRecording::new(Array2::from_shape_vec((c, t), data).unwrap(), 2048, default_channel_ids(cheek, chin)).unwrap();
        let back = decode_emg(&encode_emg(&rec), Path::new("mem")).unwrap();
        prop_assert_eq!(back, rec);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn metrics_ignore_the_estimate_scale(seed in any::<u64>(), gain in 0.05f64..20.0) {
        let clean: Vec<f64> = (0..16000)
            .map(|n| {
                let t = n as f64 / 16000.0;
                (0.5 + 0.5 * (2.0 * std::f64::consts::PI * 3.0 * t).sin()) * (2.0 * std::f64::consts::PI * 220.0 * t).sin()
            })
            .collect();
        let noise = signal(seed, 16000, 0.3);
        let clean = Waveform::new(clean, 16000).unwrap();
        let noisy = Waveform::new(clean.samples().iter().zip(&noise).map(|(a, b)| a + b).collect(), 16000).unwrap();
        let base = stoi(&clean, &noisy).unwrap();
        prop_assert!((stoi(&clean, &noisy.scaled(gain)).unwrap() - base).abs() < 1e-9);
        let sdr = si_sdr(&clean, &noisy).unwrap();
        prop_assert!((si_sdr(&clean, &noisy.scaled(gain)).unwrap() - sdr).abs() < 1e-9);
    }
}
