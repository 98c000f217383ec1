//! Stateful layer wrappers over the functional ops.
//!
//! Layers hold parameter handles, never activations; forward passes return
//! whatever the matching backward pass needs, so a built network stays
//! immutable during inference and can be shared across threads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ops::{conv1d_forward, conv1d_input_grad, conv1d_param_grads};
use super::store::{ParamId, ParamStore};
use super::tensor::{Element, Shape, Tensor};
use super::NnError;

/// 1D convolution layer with same-style padding.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1d {
    /// Registers weights (uniform in `+-sqrt(6 / (fan_in + fan_out))`) and a
    /// zero bias under `name.w` / `name.b`.
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        let fan_in = (cin * kernel) as f64;
        let fan_out = (cout * kernel) as f64;
        let bound = (6.0 / (fan_in + fan_out)).sqrt();
        let w: Vec<T> = (0..cout * cin * kernel)
            .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        Self::with_weights(store, name, cin, cout, kernel, stride, w)
    }

    /// Registers an all-zero layer; used for the final projection so a fresh
    /// residual network starts as the identity map.
    pub fn new_zeroed<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self, NnError> {
        let w = vec![T::zero(); cout * cin * kernel];
        Self::with_weights(store, name, cin, cout, kernel, stride, w)
    }

    fn with_weights<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        w: Vec<T>,
    ) -> Result<Self, NnError> {
        if kernel % 2 == 0 {
            return Err(NnError::EvenKernel(kernel));
        }
        if stride != 1 && stride != 2 {
            return Err(NnError::UnsupportedStride(stride));
        }
        let weight = store.register(&format!("{name}.w"), &[cout, cin, kernel], w, true)?;
        let bias = store.register(
            &format!("{name}.b"),
            &[cout],
            vec![T::zero(); cout],
            true,
        )?;
        Ok(Self {
            weight,
            bias,
            cin,
            cout,
            kernel,
            stride,
        })
    }

    pub fn forward<T: Element>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<Tensor<T>, NnError> {
        conv1d_forward(
            x,
            store.data(self.weight),
            self.cout,
            self.cin,
            self.kernel,
            store.data(self.bias),
            self.stride,
        )
    }

    /// Accumulates weight and bias gradients into the store and returns the
    /// input gradient. `x` must be the tensor the forward pass saw.
    pub fn backward<T: Element>(
        &self,
        store: &mut ParamStore<T>,
        x: &Tensor<T>,
        upstream: &Tensor<T>,
    ) -> Result<Tensor<T>, NnError> {
        let (dw, db) =
            conv1d_param_grads(x, upstream, self.cout, self.cin, self.kernel, self.stride)?;
        let dx = conv1d_input_grad(
            upstream,
            store.data(self.weight),
            self.cout,
            self.cin,
            self.kernel,
            self.stride,
            x.shape().len,
        )?;
        store.accumulate_grad(self.weight, &dw);
        store.accumulate_grad(self.bias, &db);
        Ok(dx)
    }

    /// Number of scalar parameters (weights plus bias).
    pub fn param_count(&self) -> usize {
        self.cout * self.cin * self.kernel + self.cout
    }
}

/// Cached statistics from a training-mode batch-norm forward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
    shape: Shape,
}

/// Batch normalization over batch and length, per channel.
///
/// Training mode normalizes with batch statistics and folds them into
/// running statistics with momentum 0.99 (the first batch initializes them
/// directly); inference mode uses the running statistics and fails if no
/// training step has happened yet.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub seen: ParamId,
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm1d {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
    ) -> Result<Self, NnError> {
        let gamma = store.register(
            &format!("{name}.gamma"),
            &[channels],
            vec![T::one(); channels],
            true,
        )?;
        let beta = store.register(
            &format!("{name}.beta"),
            &[channels],
            vec![T::zero(); channels],
            true,
        )?;
        let running_mean = store.register(
            &format!("{name}.running_mean"),
            &[channels],
            vec![T::zero(); channels],
            false,
        )?;
        let running_var = store.register(
            &format!("{name}.running_var"),
            &[channels],
            vec![T::one(); channels],
            false,
        )?;
        let seen = store.register(&format!("{name}.seen"), &[1], vec![T::zero()], false)?;
        Ok(Self {
            gamma,
            beta,
            running_mean,
            running_var,
            seen,
            channels,
            eps: 1e-5,
            momentum: 0.99,
        })
    }

    fn check_input<T: Element>(&self, x: &Tensor<T>) -> Result<(), NnError> {
        if x.shape().channels != self.channels {
            return Err(NnError::ShapeMismatch(format!(
                "batch norm: channel axis is {}, expected {}",
                x.shape().channels,
                self.channels
            )));
        }
        Ok(())
    }

    pub fn forward_train<T: Element>(
        &self,
        store: &mut ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<(Tensor<T>, BnCache<T>), NnError> {
        self.check_input(x)?;
        let s = x.shape();
        let m = (s.batch * s.len) as f64;
        let mut mean = vec![0.0f64; s.channels];
        let mut var = vec![0.0f64; s.channels];
        for c in 0..s.channels {
            let mut acc = 0.0;
            for n in 0..s.batch {
                for &v in x.channel(n, c) {
                    acc += v.into_f64();
                }
            }
            let mu = acc / m;
            let mut acc2 = 0.0;
            for n in 0..s.batch {
                for &v in x.channel(n, c) {
                    let d = v.into_f64() - mu;
                    acc2 += d * d;
                }
            }
            mean[c] = mu;
            var[c] = acc2 / m;
        }

        // Fold into running statistics.
        let first = store.data(self.seen)[0].into_f64() == 0.0;
        {
            let p = store.get_mut(self.running_mean);
            for c in 0..s.channels {
                p.data[c] = if first {
                    T::from_f64(mean[c])
                } else {
                    T::from_f64(
                        self.momentum * p.data[c].into_f64() + (1.0 - self.momentum) * mean[c],
                    )
                };
            }
        }
        {
            let p = store.get_mut(self.running_var);
            for c in 0..s.channels {
                p.data[c] = if first {
                    T::from_f64(var[c])
                } else {
                    T::from_f64(
                        self.momentum * p.data[c].into_f64() + (1.0 - self.momentum) * var[c],
                    )
                };
            }
        }
        {
            let p = store.get_mut(self.seen);
            p.data[0] = T::from_f64(p.data[0].into_f64() + 1.0);
        }

        let gamma = store.data(self.gamma);
        let beta = store.data(self.beta);
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::from_f64(1.0 / (v + self.eps).sqrt()))
            .collect();
        let mut normalized = vec![T::zero(); s.numel()];
        let mut out = Tensor::zeros(s);
        for n in 0..s.batch {
            for c in 0..s.channels {
                let mu = T::from_f64(mean[c]);
                let istd = inv_std[c];
                let (g, b) = (gamma[c], beta[c]);
                let base = (n * s.channels + c) * s.len;
                let xs = x.channel(n, c);
                for t in 0..s.len {
                    let xh = (xs[t] - mu) * istd;
                    normalized[base + t] = xh;
                    out.data_mut()[base + t] = g * xh + b;
                }
            }
        }
        Ok((
            out,
            BnCache {
                normalized,
                inv_std,
                shape: s,
            },
        ))
    }

    pub fn forward_infer<T: Element>(
        &self,
        store: &ParamStore<T>,
        x: &Tensor<T>,
    ) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        if store.data(self.seen)[0].into_f64() == 0.0 {
            return Err(NnError::NoRunningStats);
        }
        let s = x.shape();
        let gamma = store.data(self.gamma);
        let beta = store.data(self.beta);
        let mean = store.data(self.running_mean);
        let var = store.data(self.running_var);
        let mut out = Tensor::zeros(s);
        for n in 0..s.batch {
            for c in 0..s.channels {
                let istd = T::from_f64(1.0 / (var[c].into_f64() + self.eps).sqrt());
                let (mu, g, b) = (mean[c], gamma[c], beta[c]);
                let base = (n * s.channels + c) * s.len;
                let xs = x.channel(n, c);
                for t in 0..s.len {
                    out.data_mut()[base + t] = g * (xs[t] - mu) * istd + b;
                }
            }
        }
        Ok(out)
    }

    /// Exact training-mode backward pass; accumulates gamma/beta gradients
    /// and returns the input gradient.
    pub fn backward<T: Element>(
        &self,
        store: &mut ParamStore<T>,
        cache: &BnCache<T>,
        upstream: &Tensor<T>,
    ) -> Result<Tensor<T>, NnError> {
        let s = cache.shape;
        if upstream.shape() != s {
            return Err(NnError::ShapeMismatch(format!(
                "batch norm backward: upstream {} vs cached {}",
                upstream.shape(),
                s
            )));
        }
        let m = (s.batch * s.len) as f64;
        let gamma = store.data(self.gamma).to_vec();
        let mut dgamma = vec![T::zero(); s.channels];
        let mut dbeta = vec![T::zero(); s.channels];
        let mut sum_dy = vec![0.0f64; s.channels];
        let mut sum_dy_xh = vec![0.0f64; s.channels];
        for n in 0..s.batch {
            for c in 0..s.channels {
                let base = (n * s.channels + c) * s.len;
                let dys = upstream.channel(n, c);
                for t in 0..s.len {
                    let dy = dys[t].into_f64();
                    let xh = cache.normalized[base + t].into_f64();
                    sum_dy[c] += dy;
                    sum_dy_xh[c] += dy * xh;
                }
            }
        }
        for c in 0..s.channels {
            dgamma[c] = T::from_f64(sum_dy_xh[c]);
            dbeta[c] = T::from_f64(sum_dy[c]);
        }

        let mut dx = Tensor::zeros(s);
        for n in 0..s.batch {
            for c in 0..s.channels {
                let base = (n * s.channels + c) * s.len;
                let dys = upstream.channel(n, c);
                let scale = gamma[c].into_f64() * cache.inv_std[c].into_f64() / m;
                for t in 0..s.len {
                    let dy = dys[t].into_f64();
                    let xh = cache.normalized[base + t].into_f64();
                    let v = scale * (m * dy - sum_dy[c] - xh * sum_dy_xh[c]);
                    dx.data_mut()[base + t] = T::from_f64(v);
                }
            }
        }
        store.accumulate_grad(self.gamma, &dgamma);
        store.accumulate_grad(self.beta, &dbeta);
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn constant_channel_in_train_mode_outputs_beta() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm1d::new(&mut store, "bn", 1).unwrap();
        store.get_mut(bn.beta).data[0] = 0.75;
        let x = Tensor::from_vec(Shape::new(2, 1, 4), vec![3.0; 8]).unwrap();
        let (y, _) = bn.forward_train(&mut store, &x).unwrap();
        for &v in y.data() {
            assert!((v - 0.75).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn train_mode_standardizes_per_channel() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm1d::new(&mut store, "bn", 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let data: Vec<f64> = (0..2 * 2 * 50).map(|_| rng.gen_range(-2.0..3.0)).collect();
        let x = Tensor::from_vec(Shape::new(2, 2, 50), data).unwrap();
        let (y, _) = bn.forward_train(&mut store, &x).unwrap();
        for c in 0..2 {
            let mut acc = 0.0;
            let mut acc2 = 0.0;
            for n in 0..2 {
                for &v in y.channel(n, c) {
                    acc += v;
                    acc2 += v * v;
                }
            }
            let m = 100.0;
            let mean = acc / m;
            let var = acc2 / m - mean * mean;
            assert!(mean.abs() < 1e-6, "channel {c} mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "channel {c} var {var}");
        }
    }

    #[test]
    fn infer_before_training_is_a_usage_error() {
        let mut store = ParamStore::<f32>::new();
        let bn = BatchNorm1d::new(&mut store, "bn", 1).unwrap();
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 4));
        assert!(matches!(
            bn.forward_infer(&store, &x),
            Err(NnError::NoRunningStats)
        ));
    }

    #[test]
    fn running_stats_follow_first_batch_then_momentum() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm1d::new(&mut store, "bn", 1).unwrap();
        let x = Tensor::from_vec(Shape::new(1, 1, 4), vec![2.0, 2.0, 6.0, 6.0]).unwrap();
        bn.forward_train(&mut store, &x).unwrap();
        assert!((store.data(bn.running_mean)[0] - 4.0).abs() < 1e-12);
        assert!((store.data(bn.running_var)[0] - 4.0).abs() < 1e-12);

        let y = Tensor::from_vec(Shape::new(1, 1, 4), vec![0.0; 4]).unwrap();
        bn.forward_train(&mut store, &y).unwrap();
        // 0.99 * 4.0 + 0.01 * 0.0
        assert!((store.data(bn.running_mean)[0] - 3.96).abs() < 1e-12);
    }

    #[test]
    fn conv_layer_init_is_seed_deterministic() {
        let build = |seed: u64| {
            let mut store = ParamStore::<f32>::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let conv = Conv1d::new(&mut store, "c", 2, 3, 5, 1, &mut rng).unwrap();
            store.data(conv.weight).to_vec()
        };
        assert_eq!(build(9), build(9));
        assert_ne!(build(9), build(10));
    }

    #[test]
    fn conv_layer_param_count() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let conv = Conv1d::new(&mut store, "c", 4, 8, 9, 2, &mut rng).unwrap();
        assert_eq!(conv.param_count(), 4 * 8 * 9 + 8);
        assert_eq!(store.trainable_values(), conv.param_count());
    }
}
