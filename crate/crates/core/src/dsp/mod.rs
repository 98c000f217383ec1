//! Classical signal processing: Chebyshev low-pass design, zero-phase
//! filtering, decimation, cubic-spline upscaling, and STFT analysis.

mod filter;
mod spline;
mod stft;

pub use filter::{decimate, design_cheby1_lowpass, filtfilt, IirFilter};
pub use spline::{spline_upscale, spline_upscale_samples};
pub use stft::{istft, log_power, stft, stft_samples, Spectrogram, Window};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("filter order must be >= 1, got {0}")]
    InvalidOrder(usize),
    #[error("cutoff must lie in (0, 1) as a fraction of Nyquist, got {0}")]
    InvalidCutoff(f64),
    #[error("passband ripple must be positive dB, got {0}")]
    InvalidRipple(f64),
    #[error("designed filter is unstable (pole magnitude {0})")]
    Unstable(f64),
    #[error("input too short: {len} samples, need more than {min}")]
    InputTooShort { len: usize, min: usize },
    #[error("decimation ratio must be >= 2, got {0}")]
    InvalidRatio(usize),
    #[error("frame length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("hop must be >= 1")]
    ZeroHop,
    #[error("log-power floor must be positive, got {0}")]
    InvalidFloor(f64),
}
