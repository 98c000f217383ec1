//! Chebyshev type I low-pass design, zero-phase filtering, and decimation.
//!
//! The design route follows the classical recipe: analog prototype poles,
//! low-pass frequency scaling with pre-warping, bilinear transform, then
//! expansion into transfer-function coefficients.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::DspError;
use crate::audio::AudioBuffer;

/// Digital IIR filter in transfer-function form, normalized so `a[0] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    /// Feed-forward coefficients.
    pub b: Vec<f64>,
    /// Feedback coefficients, `a[0] == 1`.
    pub a: Vec<f64>,
    /// Filter order.
    pub order: usize,
}

impl IirFilter {
    /// Gain of the filter at DC, `sum(b) / sum(a)`.
    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// Returns the same filter scaled so the DC gain is exactly 1.
    ///
    /// Even-order Chebyshev I designs sit `ripple_db` below unity at DC;
    /// the decimation path uses this compensation to preserve loudness.
    pub fn with_unit_dc_gain(mut self) -> Self {
        let g = self.dc_gain();
        for b in &mut self.b {
            *b /= g;
        }
        self
    }
}

/// Designs a digital Chebyshev type I low-pass filter.
///
/// `cutoff` is a fraction of Nyquist in `(0, 1)`; `ripple_db` is the peak
/// passband ripple in dB. The passband edge sits exactly `ripple_db` below
/// unity gain.
pub fn design_cheby1_lowpass(
    order: usize,
    ripple_db: f64,
    cutoff: f64,
) -> Result<IirFilter, DspError> {
    if order < 1 {
        return Err(DspError::InvalidOrder(order));
    }
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(DspError::InvalidCutoff(cutoff));
    }
    if ripple_db <= 0.0 {
        return Err(DspError::InvalidRipple(ripple_db));
    }

    // Analog prototype poles (cutoff 1 rad/s), no finite zeros.
    let eps = (10f64.powf(ripple_db / 10.0) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / order as f64;
    let n = order as i64;
    let mut poles: Vec<Complex64> = Vec::with_capacity(order);
    let mut m = -n + 1;
    while m < n {
        let theta = PI * m as f64 / (2.0 * n as f64);
        poles.push(-Complex64::new(mu, theta).sinh());
        m += 2;
    }
    let mut gain = poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, p| acc * (-p))
        .re;
    if order % 2 == 0 {
        gain /= (1.0 + eps * eps).sqrt();
    }

    // Low-pass scale to the pre-warped cutoff, then bilinear transform at
    // the conventional internal rate fs = 2.
    let fs = 2.0;
    let warped = 2.0 * fs * (PI * cutoff / fs).tan();
    for p in &mut poles {
        *p *= warped;
    }
    gain *= warped.powi(order as i32);

    let fs2 = Complex64::new(2.0 * fs, 0.0);
    let mut digital_poles = Vec::with_capacity(order);
    let mut denom_prod = Complex64::new(1.0, 0.0);
    for p in &poles {
        digital_poles.push((fs2 + p) / (fs2 - p));
        denom_prod *= fs2 - p;
    }
    // All prototype zeros live at infinity and land on z = -1.
    let digital_zeros = vec![Complex64::new(-1.0, 0.0); order];
    let digital_gain = gain * (1.0 / denom_prod).re;

    for p in &digital_poles {
        let mag = p.norm();
        if mag >= 1.0 {
            return Err(DspError::Unstable(mag));
        }
    }

    let b: Vec<f64> = poly(&digital_zeros)
        .iter()
        .map(|c| c.re * digital_gain)
        .collect();
    let a: Vec<f64> = poly(&digital_poles).iter().map(|c| c.re).collect();
    Ok(IirFilter { b, a, order })
}

/// Expands a set of roots into monic polynomial coefficients.
fn poly(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        coeffs.push(Complex64::new(0.0, 0.0));
        for i in (1..coeffs.len()).rev() {
            let prev = coeffs[i - 1];
            coeffs[i] = coeffs[i] - r * prev;
        }
    }
    coeffs
}

/// Single-pass IIR filtering, direct form II transposed.
fn lfilter(f: &IirFilter, x: &[f64], zi: &[f64]) -> Vec<f64> {
    let n = f.a.len().max(f.b.len());
    let mut b = f.b.clone();
    let mut a = f.a.clone();
    b.resize(n, 0.0);
    a.resize(n, 0.0);
    let mut state = zi.to_vec();
    state.resize(n - 1, 0.0);
    let mut y = Vec::with_capacity(x.len());
    for &xv in x {
        let yv = b[0] * xv + state[0];
        for i in 0..n - 2 {
            state[i] = b[i + 1] * xv + state[i + 1] - a[i + 1] * yv;
        }
        state[n - 2] = b[n - 1] * xv - a[n - 1] * yv;
        y.push(yv);
    }
    y
}

/// Steady-state initial filter state for a unit step, solved from the
/// companion-form fixed point `(I - A^T) zi = B`.
fn lfilter_zi(f: &IirFilter) -> Vec<f64> {
    let n = f.a.len().max(f.b.len());
    let mut b = f.b.clone();
    let mut a = f.a.clone();
    b.resize(n, 0.0);
    a.resize(n, 0.0);
    let m = n - 1;
    let mut mat = vec![vec![0.0f64; m]; m];
    for i in 0..m {
        mat[i][0] = a[i + 1];
        if i > 0 {
            mat[i - 1][i] = -1.0;
        }
        mat[i][i] += 1.0;
    }
    let mut rhs: Vec<f64> = (0..m).map(|i| b[i + 1] - a[i + 1] * b[0]).collect();
    solve_dense(&mut mat, &mut rhs);
    rhs
}

/// Gaussian elimination with partial pivoting; overwrites `rhs` with the solution.
fn solve_dense(mat: &mut [Vec<f64>], rhs: &mut [f64]) {
    let m = rhs.len();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| mat[i][col].abs().total_cmp(&mat[j][col].abs()))
            .unwrap();
        mat.swap(col, pivot);
        rhs.swap(col, pivot);
        let diag = mat[col][col];
        for row in col + 1..m {
            let factor = mat[row][col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..m {
                mat[row][k] -= factor * mat[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    for col in (0..m).rev() {
        let mut acc = rhs[col];
        for k in col + 1..m {
            acc -= mat[col][k] * rhs[k];
        }
        rhs[col] = acc / mat[col][col];
    }
}

/// Zero-phase forward-backward filtering.
///
/// The input is extended on both ends by an odd reflection of length
/// `3 * order`, filtered forward and backward with steady-state initial
/// conditions, and trimmed back to the input length.
pub fn filtfilt(f: &IirFilter, x: &[f64]) -> Result<Vec<f64>, DspError> {
    let padlen = 3 * f.order;
    if x.len() <= padlen {
        return Err(DspError::InputTooShort {
            len: x.len(),
            min: padlen,
        });
    }

    let first = x[0];
    let last = x[x.len() - 1];
    let mut ext = Vec::with_capacity(x.len() + 2 * padlen);
    for i in (1..=padlen).rev() {
        ext.push(2.0 * first - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=padlen {
        ext.push(2.0 * last - x[x.len() - 1 - i]);
    }

    let zi = lfilter_zi(f);
    let scaled: Vec<f64> = zi.iter().map(|z| z * ext[0]).collect();
    let mut y = lfilter(f, &ext, &scaled);
    y.reverse();
    let scaled: Vec<f64> = zi.iter().map(|z| z * y[0]).collect();
    let mut y = lfilter(f, &y, &scaled);
    y.reverse();

    Ok(y[padlen..padlen + x.len()].to_vec())
}

/// Reduces the sampling rate by an integer factor.
///
/// With `use_lpf`, the signal first passes through a zero-phase order-8
/// Chebyshev I low-pass (0.05 dB ripple, cutoff `0.8 / r` of Nyquist,
/// DC-gain compensated), then every `r`-th sample is kept starting at
/// index 0. Without it the signal is subsampled directly and aliasing is
/// allowed through.
pub fn decimate(x: &AudioBuffer, r: usize, use_lpf: bool) -> Result<AudioBuffer, DspError> {
    if r < 2 {
        return Err(DspError::InvalidRatio(r));
    }
    if x.len() < r {
        return Err(DspError::InputTooShort {
            len: x.len(),
            min: r,
        });
    }
    let filtered;
    let source: &[f64] = if use_lpf {
        let f = design_cheby1_lowpass(8, 0.05, 0.8 / r as f64)?.with_unit_dc_gain();
        filtered = filtfilt(&f, &x.samples)?;
        &filtered
    } else {
        &x.samples
    };
    let samples: Vec<f64> = source.iter().step_by(r).copied().collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: x.sample_rate / r as u32,
    })
}
