//! Butterworth IIR design via the bilinear transform, and causal
//! direct-form application.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Lowpass,
    Highpass,
}

/// Digital IIR filter in transfer-function form, `a[0] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    b: Vec<f64>,
    a: Vec<f64>,
    poles: Vec<Complex64>,
    kind: FilterKind,
    cutoff_hz: f64,
    design_fs_hz: f64,
}

impl IirFilter {
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Digital poles as placed by the design.
    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    pub fn design_fs_hz(&self) -> f64 {
        self.design_fs_hz
    }

    pub fn order(&self) -> usize {
        self.a.len() - 1
    }

    /// `H(e^{jω})` at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.design_fs_hz;
        // z^{-1} = e^{-jω}
        let zinv = Complex64::from_polar(1.0, -w);
        let eval = |coeffs: &[f64]| {
            coeffs
                .iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * zinv + c)
        };
        eval(&self.b) / eval(&self.a)
    }

    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    pub fn is_stable(&self) -> bool {
        self.poles.iter().all(|p| p.norm() < 1.0)
    }

    /// Causal direct-form I filtering with zero initial conditions:
    /// `y[n] = sum_k b[k] x[n-k] - sum_{k>=1} a[k] y[n-k]`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("filter input"));
        }
        let mut y = vec![0.0; x.len()];
        for n in 0..x.len() {
            let mut acc = 0.0;
            for (k, &bk) in self.b.iter().enumerate() {
                if k > n {
                    break;
                }
                acc += bk * x[n - k];
            }
            for (k, &ak) in self.a.iter().enumerate().skip(1) {
                if k > n {
                    break;
                }
                acc -= ak * y[n - k];
            }
            y[n] = acc;
        }
        Ok(y)
    }
}

/// Designs an order-`order` Butterworth filter by mapping the analog
/// prototype through the bilinear transform with the cutoff pre-warped, so
/// the digital response is exactly `1/sqrt(2)` at `cutoff_hz`.
pub fn design_butterworth(order: usize, cutoff_hz: f64, fs_hz: f64, kind: FilterKind) -> Result<IirFilter> {
    if order == 0 {
        return Err(Error::invalid("filter order must be at least 1"));
    }
    if !(fs_hz > 0.0) || !fs_hz.is_finite() {
        return Err(Error::invalid(format!("sample rate {fs_hz} Hz")));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < fs_hz / 2.0) {
        return Err(Error::invalid(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
            fs_hz / 2.0
        )));
    }

    let two_fs = 2.0 * fs_hz;
    let warped = two_fs * (PI * cutoff_hz / fs_hz).tan();
    let n = order as f64;
    let poles: Vec<Complex64> = (0..order)
        .map(|k| {
            let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
            let s = Complex64::from_polar(warped, theta);
            (two_fs + s) / (two_fs - s)
        })
        .collect();

    let zero = match kind {
        FilterKind::Lowpass => Complex64::new(-1.0, 0.0),
        FilterKind::Highpass => Complex64::new(1.0, 0.0),
    };
    let a = real_poly(&poles);
    let mut b = real_poly(&vec![zero; order]);

    // unity gain at DC (lowpass) or Nyquist (highpass)
    let probe = match kind {
        FilterKind::Lowpass => 1.0_f64,
        FilterKind::Highpass => -1.0,
    };
    let at = |c: &[f64]| c.iter().enumerate().map(|(k, v)| v * probe.powi(k as i32)).sum::<f64>();
    let gain = at(&a) / at(&b);
    b.iter_mut().for_each(|v| *v *= gain);

    Ok(IirFilter {
        b,
        a,
        poles,
        kind,
        cutoff_hz,
        design_fs_hz: fs_hz,
    })
}

/// Expands `prod (1 - r z^{-1})` into real coefficients of `z^{-k}`.
fn real_poly(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k] += ck;
            next[k + 1] -= ck * r;
        }
        c = next;
    }
    c.into_iter().map(|v| v.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analog_magnitude(order: usize, fc: f64, fs: f64, f: f64) -> f64 {
        // pre-warped Butterworth magnitude, independent of the coefficients
        let ratio = (PI * f / fs).tan() / (PI * fc / fs).tan();
        1.0 / (1.0 + ratio.powi(2 * order as i32)).sqrt()
    }

    #[test]
    fn dc_gains() {
        let lp = design_butterworth(3, 134.0, 2048.0, FilterKind::Lowpass).unwrap();
        let hp = design_butterworth(3, 134.0, 2048.0, FilterKind::Highpass).unwrap();
        let dc = |f: &IirFilter| f.b().iter().sum::<f64>() / f.a().iter().sum::<f64>();
        assert!((dc(&lp) - 1.0).abs() < 1e-9);
        assert!(dc(&hp).abs() < 1e-9);
        assert_eq!(lp.a()[0], 1.0);
        assert_eq!(lp.b().len(), 4);
        assert_eq!(hp.a().len(), 4);
    }

    #[test]
    fn half_power_at_cutoff() {
        for kind in [FilterKind::Lowpass, FilterKind::Highpass] {
            let f = design_butterworth(3, 134.0, 2048.0, kind).unwrap();
            assert!((f.magnitude(134.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        }
    }

    #[test]
    fn magnitude_matches_warped_prototype() {
        let f = design_butterworth(3, 134.0, 2048.0, FilterKind::Lowpass).unwrap();
        for freq in [10.0, 100.0, 268.0, 500.0, 1000.0] {
            let want = analog_magnitude(3, 134.0, 2048.0, freq);
            assert!((f.magnitude(freq) - want).abs() < 1e-9, "{freq}");
        }
        // frozen from the prototype formula above
        assert!((f.magnitude(268.0) - 0.108_747_787_847).abs() < 1e-9);
    }

    #[test]
    fn rejects_cutoff_at_nyquist() {
        assert!(design_butterworth(3, 1024.0, 2048.0, FilterKind::Lowpass).is_err());
        assert!(design_butterworth(3, 0.0, 2048.0, FilterKind::Lowpass).is_err());
        assert!(design_butterworth(0, 134.0, 2048.0, FilterKind::Lowpass).is_err());
    }

    #[test]
    fn stable_with_decaying_impulse_response() {
        for order in 1..=6 {
            for kind in [FilterKind::Lowpass, FilterKind::Highpass] {
                let f = design_butterworth(order, 134.0, 2048.0, kind).unwrap();
                assert!(f.is_stable());
                let mut impulse = vec![0.0; 8192];
                impulse[0] = 1.0;
                let h = f.apply(&impulse).unwrap();
                let tail: f64 = h[4096..].iter().map(|v| v * v).sum();
                assert!(tail < 1e-20, "order {order}: tail energy {tail}");
            }
        }
    }

    #[test]
    fn constant_input_settles() {
        let x = vec![0.5; 4096];
        let lp = design_butterworth(3, 134.0, 2048.0, FilterKind::Lowpass).unwrap();
        let hp = design_butterworth(3, 134.0, 2048.0, FilterKind::Highpass).unwrap();
        assert!((lp.apply(&x).unwrap()[4095] - 0.5).abs() < 1e-6);
        assert!(hp.apply(&x).unwrap()[4095].abs() < 1e-6);
    }

    #[test]
    fn impulse_response_matches_unrolled_recursion() {
        let f = design_butterworth(3, 134.0, 2048.0, FilterKind::Highpass).unwrap();
        let (b, a) = (f.b(), f.a());
        let mut impulse = vec![0.0; 8];
        impulse[0] = 1.0;
        let h = f.apply(&impulse).unwrap();
        let mut want = [0.0; 8];
        want[0] = b[0];
        want[1] = b[1] - a[1] * want[0];
        want[2] = b[2] - a[1] * want[1] - a[2] * want[0];
        want[3] = b[3] - a[1] * want[2] - a[2] * want[1] - a[3] * want[0];
        for n in 4..8 {
            want[n] = -a[1] * want[n - 1] - a[2] * want[n - 2] - a[3] * want[n - 3];
        }
        for n in 0..8 {
            assert!((h[n] - want[n]).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        let f = design_butterworth(3, 134.0, 2048.0, FilterKind::Lowpass).unwrap();
        assert!(f.apply(&[0.0, f64::NAN]).is_err());
    }
}
