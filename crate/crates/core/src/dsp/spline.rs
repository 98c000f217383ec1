//! Natural cubic spline upscaling.

use super::DspError;
use crate::audio::AudioBuffer;

/// Upscales raw samples by an integer factor with a natural cubic spline.
///
/// The spline interpolates `(i, x[i])` and is evaluated at `j / r` for
/// `j = 0 .. r * len - 1`; points past the last node use the last
/// polynomial piece. Output length is exactly `r * len`.
pub fn spline_upscale_samples(x: &[f64], r: usize) -> Result<Vec<f64>, DspError> {
    if r < 2 {
        return Err(DspError::InvalidRatio(r));
    }
    if x.len() < 4 {
        return Err(DspError::InputTooShort {
            len: x.len(),
            min: 3,
        });
    }
    let n = x.len();
    let second = natural_second_derivatives(x);
    let mut out = Vec::with_capacity(n * r);
    for j in 0..n * r {
        let t = j as f64 / r as f64;
        let i = (t as usize).min(n - 2);
        let u = t - i as f64;
        let v = 1.0 - u;
        let s = second[i] * v * v * v / 6.0
            + second[i + 1] * u * u * u / 6.0
            + (x[i] - second[i] / 6.0) * v
            + (x[i + 1] - second[i + 1] / 6.0) * u;
        out.push(s);
    }
    Ok(out)
}

/// [`spline_upscale_samples`] on an [`AudioBuffer`]; the output rate is
/// `r` times the input rate.
pub fn spline_upscale(x: &AudioBuffer, r: usize) -> Result<AudioBuffer, DspError> {
    let samples = spline_upscale_samples(&x.samples, r)?;
    Ok(AudioBuffer {
        samples,
        sample_rate: x.sample_rate * r as u32,
    })
}

/// Second derivatives for a natural cubic spline on a unit grid
/// (zero curvature at both ends), via the Thomas algorithm.
fn natural_second_derivatives(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut second = vec![0.0f64; n];
    if n < 3 {
        return second;
    }
    let m = n - 2;
    let mut diag = vec![4.0f64; m];
    let mut rhs: Vec<f64> = (0..m)
        .map(|i| 6.0 * (x[i + 2] - 2.0 * x[i + 1] + x[i]))
        .collect();
    for i in 1..m {
        let factor = 1.0 / diag[i - 1];
        diag[i] -= factor;
        rhs[i] -= factor * rhs[i - 1];
    }
    let mut prev = rhs[m - 1] / diag[m - 1];
    second[m] = prev;
    for i in (0..m - 1).rev() {
        prev = (rhs[i] - prev) / diag[i];
        second[i + 1] = prev;
    }
    second
}
