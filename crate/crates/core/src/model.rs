//! The residual encoder-decoder bandwidth extension network.
//!
//! `B` downsampling blocks (strided conv + batch norm + ReLU) halve the
//! length while filter counts grow; `B` upsampling blocks (conv + batch norm
//! + ReLU + subpixel shuffle + skip concatenation) reverse that; a final
//! single-filter linear convolution projects back to one channel, and an
//! additive residual connection feeds the input through. The final layer is
//! zero-initialized, so a freshly built network is the identity map and
//! training only has to learn the correction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;
use crate::dsp::{spline_upscale, DspError};
use crate::nn::{
    add, concat_channels, relu_backward, relu_forward, split_channels, subpixel_shuffle,
    subpixel_unshuffle, BatchNorm1d, BnCache, Conv1d, Element, NnError, ParamStore, Shape, Tensor,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input length {len} is not divisible by 2^{blocks}")]
    IndivisibleLength { len: usize, blocks: usize },
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Architecture hyperparameters and ablation flags.
///
/// The per-block schedules follow `filters_down[b] = min(2^(6+b), 512)` and
/// `kernels_down[b] = max(2^(7-b) + 1, 9)` for `b = 1..=B`, with the
/// upsampling schedules mirrored (`b -> B - b + 1`), so filter counts grow
/// while kernels shrink on the way down and the reverse on the way up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub blocks: usize,
    pub patch_length: usize,
    pub use_skip_concat: bool,
    pub use_additive_residual: bool,
    pub filters_down: Vec<usize>,
    pub kernels_down: Vec<usize>,
    pub filters_up: Vec<usize>,
    pub kernels_up: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_blocks(4, 6000)
    }
}

impl ModelConfig {
    /// Schedule for `blocks` blocks at the given patch length.
    pub fn with_blocks(blocks: usize, patch_length: usize) -> Self {
        let filters = |b: usize| (1usize << (6 + b)).min(512);
        let kernels = |b: usize| ((1usize << (7usize.saturating_sub(b))) + 1).max(9);
        Self {
            blocks,
            patch_length,
            use_skip_concat: true,
            use_additive_residual: true,
            filters_down: (1..=blocks).map(filters).collect(),
            kernels_down: (1..=blocks).map(kernels).collect(),
            filters_up: (1..=blocks).map(|b| filters(blocks - b + 1)).collect(),
            kernels_up: (1..=blocks).map(|b| kernels(blocks - b + 1)).collect(),
        }
    }

    /// Same schedule shape with every filter count divided by `divisor`
    /// (floored at 2); keeps desk-scale models affordable.
    pub fn scaled_down(blocks: usize, patch_length: usize, divisor: usize) -> Self {
        let mut cfg = Self::with_blocks(blocks, patch_length);
        for f in cfg
            .filters_down
            .iter_mut()
            .chain(cfg.filters_up.iter_mut())
        {
            *f = (*f / divisor).max(2);
        }
        cfg
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.blocks == 0 {
            return Err(ModelError::BadConfig("need at least one block".into()));
        }
        for (name, sched) in [
            ("filters_down", &self.filters_down),
            ("kernels_down", &self.kernels_down),
            ("filters_up", &self.filters_up),
            ("kernels_up", &self.kernels_up),
        ] {
            if sched.len() != self.blocks {
                return Err(ModelError::BadConfig(format!(
                    "{name} has {} entries, expected {}",
                    sched.len(),
                    self.blocks
                )));
            }
        }
        if self.patch_length == 0 || self.patch_length % (1 << self.blocks) != 0 {
            return Err(ModelError::IndivisibleLength {
                len: self.patch_length,
                blocks: self.blocks,
            });
        }
        for &f in &self.filters_up {
            if f % 2 != 0 {
                return Err(ModelError::BadConfig(format!(
                    "upsampling filter counts must be even for the subpixel shuffle, got {f}"
                )));
            }
        }
        Ok(())
    }

    /// Input channel count of each up-block convolution, accounting for the
    /// skip concatenations.
    fn up_input_channels(&self) -> Vec<usize> {
        let b = self.blocks;
        let mut cins = Vec::with_capacity(b);
        let mut cur = self.filters_down[b - 1];
        for i in 0..b {
            cins.push(cur);
            cur = self.filters_up[i] / 2;
            if self.use_skip_concat && i < b - 1 {
                cur += self.filters_down[b - 2 - i];
            }
        }
        cins
    }

    /// Channel count entering the final projection.
    fn final_input_channels(&self) -> usize {
        self.filters_up[self.blocks - 1] / 2
    }

    /// Analytic trainable-parameter count: `cout*cin*k + cout` per
    /// convolution plus two batch-norm vectors per block.
    pub fn param_count(&self) -> usize {
        let mut total = 0usize;
        let mut cin = 1usize;
        for i in 0..self.blocks {
            let cout = self.filters_down[i];
            total += cout * cin * self.kernels_down[i] + cout + 2 * cout;
            cin = cout;
        }
        for (i, &cin) in self.up_input_channels().iter().enumerate() {
            let cout = self.filters_up[i];
            total += cout * cin * self.kernels_up[i] + cout + 2 * cout;
        }
        total += self.final_input_channels() * FINAL_KERNEL + 1;
        total
    }
}

const FINAL_KERNEL: usize = 9;

#[derive(Debug, Clone)]
struct Block {
    conv: Conv1d,
    bn: BatchNorm1d,
}

/// Layer handles; parameters live in the companion [`ParamStore`].
#[derive(Debug, Clone)]
pub struct UNetArch {
    cfg: ModelConfig,
    down: Vec<Block>,
    up: Vec<Block>,
    final_conv: Conv1d,
}

/// Saved activations from a training-mode forward pass.
pub struct ForwardTrace<T> {
    down: Vec<BlockTrace<T>>,
    up: Vec<BlockTrace<T>>,
    final_input: Tensor<T>,
}

struct BlockTrace<T> {
    conv_input: Tensor<T>,
    bn_cache: BnCache<T>,
    bn_out: Tensor<T>,
}

impl UNetArch {
    fn build<T: Element>(
        cfg: &ModelConfig,
        store: &mut ParamStore<T>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut down = Vec::with_capacity(cfg.blocks);
        let mut cin = 1usize;
        for i in 0..cfg.blocks {
            let name = format!("down{}", i + 1);
            let conv = Conv1d::new(
                store,
                &format!("{name}.conv"),
                cin,
                cfg.filters_down[i],
                cfg.kernels_down[i],
                2,
                &mut rng,
            )?;
            let bn = BatchNorm1d::new(store, &format!("{name}.bn"), cfg.filters_down[i])?;
            down.push(Block { conv, bn });
            cin = cfg.filters_down[i];
        }
        let mut up = Vec::with_capacity(cfg.blocks);
        for (i, &cin) in cfg.up_input_channels().iter().enumerate() {
            let name = format!("up{}", i + 1);
            let conv = Conv1d::new(
                store,
                &format!("{name}.conv"),
                cin,
                cfg.filters_up[i],
                cfg.kernels_up[i],
                1,
                &mut rng,
            )?;
            let bn = BatchNorm1d::new(store, &format!("{name}.bn"), cfg.filters_up[i])?;
            up.push(Block { conv, bn });
        }
        // Zero-initialized so the residual path starts as the identity.
        let final_conv = Conv1d::new_zeroed(
            store,
            "final.conv",
            cfg.final_input_channels(),
            1,
            FINAL_KERNEL,
            1,
        )?;
        Ok(Self {
            cfg: cfg.clone(),
            down,
            up,
            final_conv,
        })
    }

    fn check_input<T: Element>(&self, x: &Tensor<T>) -> Result<(), ModelError> {
        let s = x.shape();
        if s.channels != 1 {
            return Err(ModelError::BadConfig(format!(
                "expected single-channel input, got {} channels",
                s.channels
            )));
        }
        if s.len == 0 || s.len % (1 << self.cfg.blocks) != 0 {
            return Err(ModelError::IndivisibleLength {
                len: s.len,
                blocks: self.cfg.blocks,
            });
        }
        Ok(())
    }

    /// Inference-mode forward pass (batch-norm running statistics).
    pub fn forward_infer<T: Element>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<Tensor<T>, ModelError> {
        self.check_input(x)?;
        let b = self.cfg.blocks;
        let mut skips: Vec<Option<Tensor<T>>> = (0..b).map(|_| None).collect();
        let mut cur = x.clone();
        for (i, blk) in self.down.iter().enumerate() {
            let c = blk.conv.forward(store, &cur)?;
            let n = blk.bn.forward_infer(store, &c)?;
            cur = relu_forward(&n);
            if self.cfg.use_skip_concat && i < b - 1 {
                skips[i] = Some(cur.clone());
            }
        }
        for (i, blk) in self.up.iter().enumerate() {
            let c = blk.conv.forward(store, &cur)?;
            let n = blk.bn.forward_infer(store, &c)?;
            let r = relu_forward(&n);
            let s = subpixel_shuffle(&r)?;
            cur = if self.cfg.use_skip_concat && i < b - 1 {
                concat_channels(&s, skips[b - 2 - i].as_ref().unwrap())?
            } else {
                s
            };
        }
        let f = self.final_conv.forward(store, &cur)?;
        Ok(if self.cfg.use_additive_residual {
            add(&f, x)?
        } else {
            f
        })
    }

    /// Training-mode forward pass; returns the output and the activation
    /// trace the backward pass consumes.
    pub fn forward_train<T: Element>(
        &self,
        store: &mut ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<(Tensor<T>, ForwardTrace<T>), ModelError> {
        self.check_input(x)?;
        let b = self.cfg.blocks;
        let mut down_traces: Vec<BlockTrace<T>> = Vec::with_capacity(b);
        let mut cur = x.clone();
        for blk in &self.down {
            let c = blk.conv.forward(store, &cur)?;
            let (n, cache) = blk.bn.forward_train(store, &c)?;
            let r = relu_forward(&n);
            down_traces.push(BlockTrace {
                conv_input: cur,
                bn_cache: cache,
                bn_out: n,
            });
            cur = r;
        }
        // The relu output of down block j survives as the conv input
        // recorded by block j + 1; the deepest one is `cur` itself.
        let mut up_traces: Vec<BlockTrace<T>> = Vec::with_capacity(b);
        for (i, blk) in self.up.iter().enumerate() {
            let c = blk.conv.forward(store, &cur)?;
            let (n, cache) = blk.bn.forward_train(store, &c)?;
            let r = relu_forward(&n);
            let s = subpixel_shuffle(&r)?;
            let next = if self.cfg.use_skip_concat && i < b - 1 {
                let skip = &down_traces[b - 1 - i].conv_input;
                concat_channels(&s, skip)?
            } else {
                s
            };
            up_traces.push(BlockTrace {
                conv_input: cur,
                bn_cache: cache,
                bn_out: n,
            });
            cur = next;
        }
        let f = self.final_conv.forward(store, &cur)?;
        let out = if self.cfg.use_additive_residual {
            add(&f, x)?
        } else {
            f
        };
        Ok((
            out,
            ForwardTrace {
                down: down_traces,
                up: up_traces,
                final_input: cur,
            },
        ))
    }

    /// Backpropagates `dout` through the trace, accumulating parameter
    /// gradients into the store; returns the gradient at the input.
    pub fn backward<T: Element>(
        &self,
        store: &mut ParamStore<T>,
        trace: &ForwardTrace<T>,
        dout: &Tensor<T>,
    ) -> Result<Tensor<T>, ModelError> {
        let b = self.cfg.blocks;
        let mut cur = self.final_conv.backward(store, &trace.final_input, dout)?;
        let mut skip_grads: Vec<Option<Tensor<T>>> = (0..b).map(|_| None).collect();
        for i in (0..b).rev() {
            let d_shuffled = if self.cfg.use_skip_concat && i < b - 1 {
                let (a, skip) = split_channels(&cur, self.cfg.filters_up[i] / 2)?;
                skip_grads[b - 2 - i] = Some(skip);
                a
            } else {
                cur
            };
            let d_relu_out = subpixel_unshuffle(&d_shuffled)?;
            let tr = &trace.up[i];
            let d_bn_out = relu_backward(&tr.bn_out, &d_relu_out)?;
            let d_conv_out = self.up[i].bn.backward(store, &tr.bn_cache, &d_bn_out)?;
            cur = self.up[i]
                .conv
                .backward(store, &tr.conv_input, &d_conv_out)?;
        }
        for i in (0..b).rev() {
            if let Some(skip) = &skip_grads[i] {
                cur = add(&cur, skip)?;
            }
            let tr = &trace.down[i];
            let d_bn_out = relu_backward(&tr.bn_out, &cur)?;
            let d_conv_out = self.down[i].bn.backward(store, &tr.bn_cache, &d_bn_out)?;
            cur = self.down[i]
                .conv
                .backward(store, &tr.conv_input, &d_conv_out)?;
        }
        if self.cfg.use_additive_residual {
            cur = add(&cur, dout)?;
        }
        Ok(cur)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }
}

/// A built network bundled with its parameter store.
pub struct AudioUNet<T: Element = f32> {
    arch: UNetArch,
    store: ParamStore<T>,
}

impl<T: Element> AudioUNet<T> {
    /// Builds and initializes a network. The seed fixes all weight draws;
    /// equal seeds give identical parameters.
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let mut store = ParamStore::new();
        let arch = UNetArch::build(cfg, &mut store, seed)?;
        Ok(Self { arch, store })
    }

    pub fn config(&self) -> &ModelConfig {
        self.arch.config()
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Architecture and store, separately borrowed; training loops and the
    /// gradient audit need both at once.
    pub fn parts_mut(&mut self) -> (&UNetArch, &mut ParamStore<T>) {
        (&self.arch, &mut self.store)
    }

    pub fn param_count(&self) -> usize {
        self.store.trainable_values()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        self.arch.forward_infer(&self.store, x)
    }

    pub fn forward_train(
        &mut self,
        x: &Tensor<T>,
    ) -> Result<(Tensor<T>, ForwardTrace<T>), ModelError> {
        self.arch.forward_train(&mut self.store, x)
    }

    pub fn backward(
        &mut self,
        trace: &ForwardTrace<T>,
        dout: &Tensor<T>,
    ) -> Result<Tensor<T>, ModelError> {
        self.arch.backward(&mut self.store, trace, dout)
    }
}

impl AudioUNet<f32> {
    /// Runs a whole track of arbitrary length: cubic-upscale by `r`,
    /// zero-pad to a multiple of `2^B`, forward in inference mode, trim.
    /// The output rate is `r` times the input rate.
    pub fn predict_track(
        &self,
        low_res: &AudioBuffer,
        r: usize,
    ) -> Result<AudioBuffer, ModelError> {
        let up = spline_upscale(low_res, r)?;
        let target_len = up.len();
        let chunk = 1usize << self.arch.cfg.blocks;
        let padded_len = target_len.div_ceil(chunk) * chunk;
        let mut data: Vec<f32> = up.samples.iter().map(|&v| v as f32).collect();
        data.resize(padded_len, 0.0);
        let x = Tensor::from_vec(Shape::new(1, 1, padded_len), data)?;
        let y = self.forward(&x)?;
        let samples: Vec<f64> = y.data()[..target_len]
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        Ok(AudioBuffer {
            samples,
            sample_rate: up.sample_rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{mse_loss, AdamConfig, LossMode};
    use rand::Rng;

    #[test]
    fn default_schedule_matches_corrected_formulas() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.filters_down, vec![128, 256, 512, 512]);
        assert_eq!(cfg.kernels_down, vec![65, 33, 17, 9]);
        assert_eq!(cfg.filters_up, vec![512, 512, 256, 128]);
        assert_eq!(cfg.kernels_up, vec![9, 17, 33, 65]);
        assert_eq!(cfg.up_input_channels(), vec![512, 768, 512, 256]);
        assert_eq!(cfg.final_input_channels(), 64);
    }

    #[test]
    fn default_parameter_count_golden_value() {
        // Frozen from the analytic count: sum of cout*cin*k + cout per conv
        // plus 2*cout per batch norm.
        assert_eq!(ModelConfig::default().param_count(), 21_185_473);
    }

    #[test]
    fn built_store_matches_analytic_count() {
        for cfg in [
            ModelConfig::scaled_down(4, 96, 32),
            ModelConfig::scaled_down(2, 64, 16),
        ] {
            let net = AudioUNet::<f32>::build(&cfg, 7).unwrap();
            assert_eq!(net.param_count(), cfg.param_count());
        }
    }

    #[test]
    fn no_skip_reduces_up_input_channels_only() {
        let mut cfg = ModelConfig::default();
        cfg.use_skip_concat = false;
        assert_eq!(cfg.up_input_channels(), vec![512, 256, 256, 128]);
        assert!(cfg.param_count() < ModelConfig::default().param_count());
    }

    #[test]
    fn seeded_builds_are_identical() {
        let cfg = ModelConfig::scaled_down(2, 16, 32);
        let a = AudioUNet::<f32>::build(&cfg, 42).unwrap();
        let b = AudioUNet::<f32>::build(&cfg, 42).unwrap();
        let c = AudioUNet::<f32>::build(&cfg, 43).unwrap();
        for (pa, pb) in a.store().iter().zip(b.store().iter()) {
            assert_eq!(pa.data, pb.data, "{}", pa.name);
        }
        let differs = a
            .store()
            .iter()
            .zip(c.store().iter())
            .any(|(pa, pc)| pa.data != pc.data);
        assert!(differs);
    }

    #[test]
    fn fresh_network_is_the_identity_map() {
        let cfg = ModelConfig::scaled_down(2, 32, 16);
        let mut net = AudioUNet::<f32>::build(&cfg, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f32> = (0..64).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let x = Tensor::from_vec(Shape::new(2, 1, 32), data).unwrap();
        let (y, _) = net.forward_train(&x).unwrap();
        assert_eq!(y.data(), x.data(), "zeroed final layer + residual");
    }

    #[test]
    fn ablated_variants_build_and_keep_shape() {
        for (skip, residual) in [(true, true), (true, false), (false, false)] {
            let mut cfg = ModelConfig::scaled_down(2, 32, 16);
            cfg.use_skip_concat = skip;
            cfg.use_additive_residual = residual;
            let mut net = AudioUNet::<f32>::build(&cfg, 2).unwrap();
            let x = Tensor::from_vec(
                Shape::new(1, 1, 32),
                (0..32).map(|i| (i as f32 * 0.2).cos()).collect(),
            )
            .unwrap();
            let (y, _) = net.forward_train(&x).unwrap();
            assert_eq!(y.shape(), x.shape());
        }
    }

    #[test]
    fn forward_shape_invariance_and_divisibility_error() {
        let cfg = ModelConfig::scaled_down(3, 48, 32);
        let mut net = AudioUNet::<f32>::build(&cfg, 1).unwrap();
        for len in [48usize, 96] {
            let x = Tensor::from_vec(
                Shape::new(1, 1, len),
                (0..len).map(|i| (i as f32 * 0.1).sin()).collect(),
            )
            .unwrap();
            let (y, _) = net.forward_train(&x).unwrap();
            assert_eq!(y.shape(), x.shape());
        }
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 50));
        assert!(matches!(
            net.forward_train(&x),
            Err(ModelError::IndivisibleLength {
                len: 50,
                blocks: 3
            })
        ));
    }

    #[test]
    fn batch_of_two_matches_two_singles_in_infer_mode() {
        let cfg = ModelConfig::scaled_down(2, 32, 16);
        let mut net = AudioUNet::<f32>::build(&cfg, 11).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        // Nudge parameters off the identity and give batch norm statistics.
        let train: Vec<f32> = (0..128).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let xt = Tensor::from_vec(Shape::new(4, 1, 32), train).unwrap();
        let (out, trace) = net.forward_train(&xt).unwrap();
        let target = Tensor::zeros(out.shape());
        let (_, dloss) = mse_loss(&out, &target, LossMode::MeanSquare).unwrap();
        net.backward(&trace, &dloss).unwrap();
        net.store_mut().adam_step(&AdamConfig::with_lr(0.01)).unwrap();

        let a: Vec<f32> = (0..32).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let b: Vec<f32> = (0..32).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let mut both = a.clone();
        both.extend_from_slice(&b);
        let ya = net
            .forward(&Tensor::from_vec(Shape::new(1, 1, 32), a).unwrap())
            .unwrap();
        let yb = net
            .forward(&Tensor::from_vec(Shape::new(1, 1, 32), b).unwrap())
            .unwrap();
        let yab = net
            .forward(&Tensor::from_vec(Shape::new(2, 1, 32), both).unwrap())
            .unwrap();
        for (i, (&single, &batched)) in
            ya.data().iter().chain(yb.data()).zip(yab.data()).enumerate()
        {
            assert!((single - batched).abs() < 1e-6, "sample {i}");
        }
    }

    #[test]
    fn predict_track_lengths_and_rate() {
        let cfg = ModelConfig::scaled_down(2, 32, 32);
        let mut net = AudioUNet::<f32>::build(&cfg, 3).unwrap();
        // One training step so inference-mode batch norm has statistics.
        let x = Tensor::from_vec(
            Shape::new(1, 1, 32),
            (0..32).map(|i| (i as f32 * 0.3).sin()).collect(),
        )
        .unwrap();
        let (out, trace) = net.forward_train(&x).unwrap();
        let (_, d) = mse_loss(&out, &x, LossMode::MeanSquare).unwrap();
        net.backward(&trace, &d).unwrap();

        let low = AudioBuffer::new(
            (0..1000).map(|i| (i as f64 * 0.05).sin() * 0.5).collect(),
            4000,
        );
        let out = net.predict_track(&low, 4).unwrap();
        assert_eq!(out.sample_rate, 16000);
        assert_eq!(out.len(), 4000);
    }
}
