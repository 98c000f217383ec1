//! Audio bandwidth extension toolkit.
//!
//! Reconstructs high-resolution audio from a low-resolution input by training
//! a residual 1D convolutional encoder-decoder on aligned signal pairs. The
//! crate bundles everything the pipeline needs:
//!
//! - [`audio`]: mono WAV reading/writing (PCM16 and IEEE float32).
//! - [`dsp`]: Chebyshev low-pass design, zero-phase filtering, decimation,
//!   cubic-spline upscaling, and STFT analysis.
//! - [`nn`]: a small differentiable tensor engine (conv1d, batch norm, ReLU,
//!   1D subpixel shuffle, MSE, ADAM) with exact backward passes.
//! - [`model`]: the encoder-decoder network assembled from [`nn`] ops.
//! - [`baseline`]: a spectral dense-network baseline operating on STFT frames.
//! - [`data`]: synthetic corpus generation and training patch archives.
//! - [`train`]: the training loop, checkpointing, and ablation harness.
//! - [`eval`]: SNR / log-spectral distance metrics and multi-method reports.
//! - [`audit`]: finite-difference gradient audit across all layers.

pub mod audio;
pub mod audit;
pub mod baseline;
pub mod data;
pub mod dsp;
pub mod eval;
pub mod model;
pub mod nn;
pub mod train;

pub use audio::AudioBuffer;
pub use nn::{ParamStore, Tensor};
