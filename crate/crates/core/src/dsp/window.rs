use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Symmetric Blackman window,
/// `w[k] = 0.42 - 0.5 cos(2πk/(n-1)) + 0.08 cos(4πk/(n-1))`.
pub fn blackman(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid(format!("window length {n} < 2")));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|k| {
            let x = k as f64 / denom;
            0.42 - 0.5 * (2.0 * PI * x).cos() + 0.08 * (4.0 * PI * x).cos()
        })
        .collect())
}

/// Periodic Hann window as used by the intelligibility metric's analysis.
pub(crate) fn hann_inner(n: usize) -> Vec<f64> {
    // hanning(n + 2)[1..n+1], i.e. zero endpoints excluded
    let denom = (n + 1) as f64;
    (1..=n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / denom).cos())
        .collect()
}
