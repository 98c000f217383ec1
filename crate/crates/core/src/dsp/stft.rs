//! Short-time Fourier transform and log-power spectra.

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::DspError;

/// Analysis window. `Rectangular` exists for bin-exact DFT tests;
/// all production paths use `Hann`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Window samples, periodic convention (`w[i] = 0.5 (1 - cos(2 pi i / n))`).
    pub fn samples(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
                .collect(),
        }
    }
}

/// One-sided complex STFT, `frames` frames by `bins` frequency bins.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// Row-major `frames x bins` complex values.
    pub data: Vec<Complex64>,
    pub frames: usize,
    /// `frame_length / 2 + 1` one-sided bins.
    pub bins: usize,
    pub frame_length: usize,
    pub hop: usize,
    pub window: Window,
}

impl Spectrogram {
    pub fn frame(&self, l: usize) -> &[Complex64] {
        &self.data[l * self.bins..(l + 1) * self.bins]
    }
}

/// Computes the one-sided STFT of `x` without centering or padding.
///
/// Produces `1 + (len - frame_length) / hop` frames. `frame_length` must be
/// a power of two.
pub fn stft_samples(
    x: &[f64],
    frame_length: usize,
    hop: usize,
    window: Window,
) -> Result<Spectrogram, DspError> {
    if frame_length == 0 || !frame_length.is_power_of_two() {
        return Err(DspError::NotPowerOfTwo(frame_length));
    }
    if hop == 0 {
        return Err(DspError::ZeroHop);
    }
    if x.len() < frame_length {
        return Err(DspError::InputTooShort {
            len: x.len(),
            min: frame_length - 1,
        });
    }
    let frames = 1 + (x.len() - frame_length) / hop;
    let bins = frame_length / 2 + 1;
    let w = window.samples(frame_length);
    let fft = FftPlanner::new().plan_fft_forward(frame_length);
    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); frame_length];
    for l in 0..frames {
        let start = l * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(x[start + i] * w[i], 0.0);
        }
        fft.process(&mut buf);
        data.extend_from_slice(&buf[..bins]);
    }
    Ok(Spectrogram {
        data,
        frames,
        bins,
        frame_length,
        hop,
        window,
    })
}

/// [`stft_samples`] on an [`crate::audio::AudioBuffer`].
pub fn stft(
    x: &crate::audio::AudioBuffer,
    frame_length: usize,
    hop: usize,
    window: Window,
) -> Result<Spectrogram, DspError> {
    stft_samples(&x.samples, frame_length, hop, window)
}

/// Log-power matrix `X(l, k) = log10(max(|S(l, k)|^2, floor))`,
/// row-major `frames x bins`. The conventional floor is `1e-10`.
pub fn log_power(spec: &Spectrogram, floor: f64) -> Result<Vec<f64>, DspError> {
    if floor <= 0.0 {
        return Err(DspError::InvalidFloor(floor));
    }
    Ok(spec
        .data
        .iter()
        .map(|c| c.norm_sqr().max(floor).log10())
        .collect())
}

/// Inverse STFT by weighted overlap-add.
///
/// Each frame is inverted with a one-sided inverse DFT, re-windowed, and
/// accumulated; the result is normalized by the summed squared window. With
/// hop `frame_length / 2` and a Hann window, unmodified spectra reconstruct
/// the analyzed span exactly wherever at least two frames overlap. Output
/// length is `(frames - 1) * hop + frame_length`.
pub fn istft(spec: &Spectrogram) -> Vec<f64> {
    let n = spec.frame_length;
    let out_len = (spec.frames - 1) * spec.hop + n;
    let w = spec.window.samples(n);
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let mut out = vec![0.0f64; out_len];
    let mut norm = vec![0.0f64; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for l in 0..spec.frames {
        let row = spec.frame(l);
        buf[..spec.bins].copy_from_slice(row);
        for k in 1..n / 2 {
            buf[n - k] = row[k].conj();
        }
        ifft.process(&mut buf);
        let start = l * spec.hop;
        for i in 0..n {
            let v = buf[i].re / n as f64;
            out[start + i] += w[i] * v;
            norm[start + i] += w[i] * w[i];
        }
    }
    for (o, d) in out.iter_mut().zip(&norm) {
        if *d > 1e-12 {
            *o /= d;
        }
    }
    out
}
