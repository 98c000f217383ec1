//! Minimal differentiable tensor engine.
//!
//! A fixed op set — conv1d, batch normalization, ReLU, 1D subpixel shuffle,
//! channel concatenation, MSE — each with an exact hand-derived backward
//! pass, plus ADAM and a finite-difference audit harness. Ops are generic
//! over [`Element`] so the training path runs in f32 while gradient audits
//! run in f64.

mod checkpoint;
mod gradcheck;
mod layers;
mod ops;
mod store;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{check_gradients, GradCheckEntry, GradCheckReport};
pub use layers::{BatchNorm1d, BnCache, Conv1d};
pub use ops::{
    add, concat_channels, conv1d_forward, conv1d_input_grad, conv1d_param_grads, mse_loss,
    relu_backward, relu_forward, split_channels, subpixel_shuffle, subpixel_unshuffle, LossMode,
};
pub use store::{AdamConfig, Param, ParamId, ParamStore};
pub use tensor::{Element, Shape, Tensor};

use std::io;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("subpixel shuffle needs an even channel count, got {0}")]
    OddChannels(usize),
    #[error("kernel length must be odd, got {0}")]
    EvenKernel(usize),
    #[error("stride must be 1 or 2, got {0}")]
    UnsupportedStride(usize),
    #[error("parameter {0} has no gradient")]
    MissingGrad(String),
    #[error("batch norm has no running statistics yet; run a training step first")]
    NoRunningStats,
    #[error("duplicate parameter name {0}")]
    DuplicateParam(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("parameter {name}: expected dims {expected:?}, got {got:?}")]
    DimsMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("checkpoint i/o error on {path}: {source}")]
    CheckpointIo {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
}
