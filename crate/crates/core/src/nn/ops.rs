//! Differentiable tensor ops with hand-derived backward passes.
//!
//! Convolution uses the cross-correlation convention (no kernel flip) with
//! same-style zero padding of `(k - 1) / 2` on each side, so the output
//! length is `ceil(d / stride)`. Weights are laid out `[cout, cin, k]`.

use rayon::prelude::*;

use super::tensor::{Element, Shape, Tensor};
use super::NnError;

fn check_conv_args<T: Element>(
    x: &Tensor<T>,
    w: &[T],
    cout: usize,
    cin: usize,
    k: usize,
    bias: Option<&[T]>,
    stride: usize,
) -> Result<(), NnError> {
    if k % 2 == 0 {
        return Err(NnError::EvenKernel(k));
    }
    if stride != 1 && stride != 2 {
        return Err(NnError::UnsupportedStride(stride));
    }
    if x.shape().channels != cin {
        return Err(NnError::ShapeMismatch(format!(
            "conv1d: input channel axis is {}, weight expects {cin}",
            x.shape().channels
        )));
    }
    if w.len() != cout * cin * k {
        return Err(NnError::ShapeMismatch(format!(
            "conv1d: weight has {} values, expected {cout}x{cin}x{k}",
            w.len()
        )));
    }
    if let Some(b) = bias {
        if b.len() != cout {
            return Err(NnError::ShapeMismatch(format!(
                "conv1d: bias axis is {}, expected {cout}",
                b.len()
            )));
        }
    }
    Ok(())
}

/// `out[n, co, t] = b[co] + sum_{ci, j} w[co, ci, j] * x[n, ci, t*stride + j - pad]`.
pub fn conv1d_forward<T: Element>(
    x: &Tensor<T>,
    w: &[T],
    cout: usize,
    cin: usize,
    k: usize,
    bias: &[T],
    stride: usize,
) -> Result<Tensor<T>, NnError> {
    check_conv_args(x, w, cout, cin, k, Some(bias), stride)?;
    let (n, d) = (x.shape().batch, x.shape().len);
    let out_len = (d + stride - 1) / stride;
    let pad = (k - 1) / 2;
    let mut out = Tensor::zeros(Shape::new(n, cout, out_len));

    out.data_mut()
        .par_chunks_mut(out_len)
        .enumerate()
        .for_each(|(row, out_row)| {
            let ni = row / cout;
            let co = row % cout;
            out_row.iter_mut().for_each(|o| *o = bias[co]);
            for ci in 0..cin {
                let x_row = x.channel(ni, ci);
                let w_base = (co * cin + ci) * k;
                for j in 0..k {
                    let wv = w[w_base + j];
                    let offset = j as isize - pad as isize;
                    if stride == 1 {
                        let t0 = (-offset).max(0) as usize;
                        let t1 = d.saturating_sub(offset.max(0) as usize);
                        if t0 >= t1 {
                            continue;
                        }
                        let xs = &x_row[(t0 as isize + offset) as usize..][..t1 - t0];
                        for (o, &xv) in out_row[t0..t1].iter_mut().zip(xs) {
                            *o = *o + wv * xv;
                        }
                    } else {
                        let (t0, t1) = strided_range(offset, d, out_len);
                        for t in t0..t1 {
                            let xi = (2 * t) as isize + offset;
                            out_row[t] = out_row[t] + wv * x_row[xi as usize];
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Valid output index range `[t0, t1)` for stride 2 given an input offset.
fn strided_range(offset: isize, d: usize, out_len: usize) -> (usize, usize) {
    let t0 = if offset < 0 {
        ((-offset) as usize + 1) / 2
    } else {
        0
    };
    let t1 = if (d as isize) > offset {
        (((d as isize - offset) as usize) + 1) / 2
    } else {
        0
    };
    (t0.min(out_len), t1.min(out_len))
}

/// Gradient of the convolution with respect to its input: the transposed
/// (fractionally strided) correlation of the upstream gradient with `w`.
pub fn conv1d_input_grad<T: Element>(
    upstream: &Tensor<T>,
    w: &[T],
    cout: usize,
    cin: usize,
    k: usize,
    stride: usize,
    input_len: usize,
) -> Result<Tensor<T>, NnError> {
    if k % 2 == 0 {
        return Err(NnError::EvenKernel(k));
    }
    if stride != 1 && stride != 2 {
        return Err(NnError::UnsupportedStride(stride));
    }
    let d = input_len;
    let out_len = (d + stride - 1) / stride;
    if upstream.shape().channels != cout || upstream.shape().len != out_len {
        return Err(NnError::ShapeMismatch(format!(
            "conv1d backward: upstream is {}, expected channels {cout} length {out_len}",
            upstream.shape()
        )));
    }
    let n = upstream.shape().batch;
    let pad = (k - 1) / 2;
    let mut dx = Tensor::zeros(Shape::new(n, cin, d));

    dx.data_mut()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(row, dx_row)| {
            let ni = row / cin;
            let ci = row % cin;
            for co in 0..cout {
                let up_row = upstream.channel(ni, co);
                let w_base = (co * cin + ci) * k;
                for j in 0..k {
                    let wv = w[w_base + j];
                    let offset = j as isize - pad as isize;
                    if stride == 1 {
                        let t0 = (-offset).max(0) as usize;
                        let t1 = d.saturating_sub(offset.max(0) as usize);
                        if t0 >= t1 {
                            continue;
                        }
                        let dst = &mut dx_row[(t0 as isize + offset) as usize..][..t1 - t0];
                        for (o, &uv) in dst.iter_mut().zip(&up_row[t0..t1]) {
                            *o = *o + wv * uv;
                        }
                    } else {
                        let (t0, t1) = strided_range(offset, d, out_len);
                        for t in t0..t1 {
                            let xi = ((2 * t) as isize + offset) as usize;
                            dx_row[xi] = dx_row[xi] + wv * up_row[t];
                        }
                    }
                }
            }
        });
    Ok(dx)
}

/// Gradients of the convolution with respect to weights and bias:
/// `dw` via input-upstream correlation, `db` via summation.
pub fn conv1d_param_grads<T: Element>(
    x: &Tensor<T>,
    upstream: &Tensor<T>,
    cout: usize,
    cin: usize,
    k: usize,
    stride: usize,
) -> Result<(Vec<T>, Vec<T>), NnError> {
    check_conv_args(x, &vec![T::zero(); cout * cin * k], cout, cin, k, None, stride)?;
    let (n, d) = (x.shape().batch, x.shape().len);
    let out_len = (d + stride - 1) / stride;
    if upstream.shape() != Shape::new(n, cout, out_len) {
        return Err(NnError::ShapeMismatch(format!(
            "conv1d backward: upstream is {}, expected {}",
            upstream.shape(),
            Shape::new(n, cout, out_len)
        )));
    }
    let pad = (k - 1) / 2;
    let mut dw = vec![T::zero(); cout * cin * k];
    dw.par_chunks_mut(cin * k).enumerate().for_each(|(co, dw_row)| {
        for ni in 0..n {
            let up_row = upstream.channel(ni, co);
            for ci in 0..cin {
                let x_row = x.channel(ni, ci);
                for j in 0..k {
                    let offset = j as isize - pad as isize;
                    let mut acc = T::zero();
                    if stride == 1 {
                        let t0 = (-offset).max(0) as usize;
                        let t1 = d.saturating_sub(offset.max(0) as usize);
                        if t0 < t1 {
                            let xs = &x_row[(t0 as isize + offset) as usize..][..t1 - t0];
                            for (&uv, &xv) in up_row[t0..t1].iter().zip(xs) {
                                acc = acc + uv * xv;
                            }
                        }
                    } else {
                        let (t0, t1) = strided_range(offset, d, out_len);
                        for t in t0..t1 {
                            let xi = ((2 * t) as isize + offset) as usize;
                            acc = acc + up_row[t] * x_row[xi];
                        }
                    }
                    dw_row[ci * k + j] = dw_row[ci * k + j] + acc;
                }
            }
        }
    });
    let mut db = vec![T::zero(); cout];
    for ni in 0..n {
        for (co, dbv) in db.iter_mut().enumerate() {
            for &uv in upstream.channel(ni, co) {
                *dbv = *dbv + uv;
            }
        }
    }
    Ok((dw, db))
}

/// `max(0, x)` elementwise.
pub fn relu_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .map(|&v| if v > T::zero() { v } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data).unwrap()
}

/// Masks the upstream gradient where the forward input was `<= 0`
/// (subgradient at exactly zero is taken as zero).
pub fn relu_backward<T: Element>(
    input: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    if input.shape() != upstream.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "relu backward: input {} vs upstream {}",
            input.shape(),
            upstream.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&v, &u)| if v > T::zero() { u } else { T::zero() })
        .collect();
    Ok(Tensor::from_vec(input.shape(), data).unwrap())
}

/// Interleaves channel pairs into time: `out[n, c, 2t + j] = x[n, 2c + j, t]`,
/// turning `N x F x d` into `N x F/2 x 2d`. Pure permutation.
pub fn subpixel_shuffle<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let s = x.shape();
    if s.channels % 2 != 0 {
        return Err(NnError::OddChannels(s.channels));
    }
    let out_shape = Shape::new(s.batch, s.channels / 2, 2 * s.len);
    let mut out = Tensor::zeros(out_shape);
    for n in 0..s.batch {
        for c in 0..out_shape.channels {
            for j in 0..2 {
                let src = x.channel(n, 2 * c + j);
                let dst_base = (n * out_shape.channels + c) * out_shape.len;
                let dst = &mut out.data_mut()[dst_base..dst_base + out_shape.len];
                for (t, &v) in src.iter().enumerate() {
                    dst[2 * t + j] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`subpixel_shuffle`]; also its backward pass.
pub fn subpixel_unshuffle<T: Element>(y: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let s = y.shape();
    if s.len % 2 != 0 {
        return Err(NnError::ShapeMismatch(format!(
            "subpixel unshuffle: length axis {} is odd",
            s.len
        )));
    }
    let out_shape = Shape::new(s.batch, s.channels * 2, s.len / 2);
    let mut out = Tensor::zeros(out_shape);
    for n in 0..s.batch {
        for c in 0..s.channels {
            let src = y.channel(n, c);
            for j in 0..2 {
                let dst_base = (n * out_shape.channels + 2 * c + j) * out_shape.len;
                let dst = &mut out.data_mut()[dst_base..dst_base + out_shape.len];
                for (t, slot) in dst.iter_mut().enumerate() {
                    *slot = src[2 * t + j];
                }
            }
        }
    }
    Ok(out)
}

/// Elementwise sum; shapes must match. Backward passes the upstream
/// gradient to both operands unchanged.
pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if a.shape() != b.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "add: {} vs {}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x + y)
        .collect();
    Ok(Tensor::from_vec(a.shape(), data).unwrap())
}

/// Stacks `a`'s channels before `b`'s; batch and length must match.
pub fn concat_channels<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.batch != sb.batch || sa.len != sb.len {
        return Err(NnError::ShapeMismatch(format!(
            "concat: {} vs {} (batch and length axes must match)",
            sa, sb
        )));
    }
    let out_shape = Shape::new(sa.batch, sa.channels + sb.channels, sa.len);
    let mut data = Vec::with_capacity(out_shape.numel());
    for n in 0..sa.batch {
        for c in 0..sa.channels {
            data.extend_from_slice(a.channel(n, c));
        }
        for c in 0..sb.channels {
            data.extend_from_slice(b.channel(n, c));
        }
    }
    Tensor::from_vec(out_shape, data)
}

/// Splits the first `ca` channels from the rest; the adjoint of
/// [`concat_channels`].
pub fn split_channels<T: Element>(
    y: &Tensor<T>,
    ca: usize,
) -> Result<(Tensor<T>, Tensor<T>), NnError> {
    let s = y.shape();
    if ca > s.channels {
        return Err(NnError::ShapeMismatch(format!(
            "split: {ca} channels requested from {}",
            s
        )));
    }
    let cb = s.channels - ca;
    let mut a = Tensor::zeros(Shape::new(s.batch, ca, s.len));
    let mut b = Tensor::zeros(Shape::new(s.batch, cb, s.len));
    for n in 0..s.batch {
        for c in 0..ca {
            let dst = (n * ca + c) * s.len;
            a.data_mut()[dst..dst + s.len].copy_from_slice(y.channel(n, c));
        }
        for c in 0..cb {
            let dst = (n * cb + c) * s.len;
            b.data_mut()[dst..dst + s.len].copy_from_slice(y.channel(n, ca + c));
        }
    }
    Ok((a, b))
}

/// Loss reduction mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Mean over all elements of the squared residual; the training loss.
    MeanSquare,
    /// Total residual L2 norm divided by the number of batch items;
    /// kept as a reporting-only alternative.
    ScaledNorm,
}

/// Squared-error loss and its gradient with respect to `pred`.
pub fn mse_loss<T: Element>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    mode: LossMode,
) -> Result<(f64, Tensor<T>), NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch(format!(
            "loss: pred {} vs target {}",
            pred.shape(),
            target.shape()
        )));
    }
    let numel = pred.shape().numel() as f64;
    let batch = pred.shape().batch as f64;
    let mut total = 0.0f64;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let r = (p - t).into_f64();
        total += r * r;
    }
    let (loss, scale) = match mode {
        LossMode::MeanSquare => (total / numel, 2.0 / numel),
        LossMode::ScaledNorm => {
            let norm = total.sqrt();
            let scale = if norm > 0.0 { 1.0 / (batch * norm) } else { 0.0 };
            (norm / batch, scale)
        }
    };
    let scale_t = T::from_f64(scale);
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| scale_t * (p - t))
        .collect();
    Ok((loss, Tensor::from_vec(pred.shape(), grad).unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t1(data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(1, 1, data.len()), data.to_vec()).unwrap()
    }

    /// Direct sliding-window reference convolution.
    fn conv_ref(
        x: &Tensor<f64>,
        w: &[f64],
        cout: usize,
        cin: usize,
        k: usize,
        bias: &[f64],
        stride: usize,
    ) -> Tensor<f64> {
        let (n, d) = (x.shape().batch, x.shape().len);
        let out_len = (d + stride - 1) / stride;
        let pad = (k as isize - 1) / 2;
        let mut out = Tensor::zeros(Shape::new(n, cout, out_len));
        for ni in 0..n {
            for co in 0..cout {
                for t in 0..out_len {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for j in 0..k {
                            let xi = (t * stride) as isize + j as isize - pad;
                            if xi >= 0 && (xi as usize) < d {
                                acc += w[(co * cin + ci) * k + j] * x.at(ni, ci, xi as usize);
                            }
                        }
                    }
                    let idx = (ni * cout + co) * out_len + t;
                    out.data_mut()[idx] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn edge_detector_example() {
        let x = t1(&[1.0, 2.0, 3.0]);
        let out = conv1d_forward(&x, &[1.0, 0.0, -1.0], 1, 1, 3, &[0.0], 1).unwrap();
        assert_eq!(out.data(), &[-2.0, -2.0, 2.0]);
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = t1(&[0.5, -1.5, 2.0, 0.0, 3.25]);
        let out = conv1d_forward(&x, &[0.0, 1.0, 0.0], 1, 1, 3, &[0.0], 1).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn stride_two_halves_length() {
        let x = t1(&[1.0; 6]);
        let out = conv1d_forward(&x, &[0.0, 1.0, 0.0], 1, 1, 3, &[0.0], 2).unwrap();
        assert_eq!(out.shape().len, 3);
        let x = t1(&[1.0; 7]);
        let out = conv1d_forward(&x, &[0.0, 1.0, 0.0], 1, 1, 3, &[0.0], 2).unwrap();
        assert_eq!(out.shape().len, 4);
    }

    #[test]
    fn forward_matches_reference_on_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for case in 0..40 {
            let n = rng.gen_range(1..=2);
            let cin = rng.gen_range(1..=3);
            let cout = rng.gen_range(1..=3);
            let d = rng.gen_range(1..=9);
            let k = [1usize, 3, 5, 7][rng.gen_range(0..4)].min(2 * d + 1);
            let stride = if case % 2 == 0 { 1 } else { 2 };
            let x = Tensor::from_vec(
                Shape::new(n, cin, d),
                (0..n * cin * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let w: Vec<f64> = (0..cout * cin * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = conv1d_forward(&x, &w, cout, cin, k, &b, stride).unwrap();
            let want = conv_ref(&x, &w, cout, cin, k, &b, stride);
            assert_eq!(got.shape(), want.shape(), "case {case}");
            for (g, w_) in got.data().iter().zip(want.data()) {
                assert!((g - w_).abs() < 1e-12, "case {case}: {g} vs {w_}");
            }
        }
    }

    #[test]
    fn scalar_chain_rule() {
        // x = [a], w = [w0], k = 1, loss = out: dw = a, dx = w0, db = 1.
        let a = 1.75;
        let w0 = -0.6;
        let x = t1(&[a]);
        let up = t1(&[1.0]);
        let dx = conv1d_input_grad(&up, &[w0], 1, 1, 1, 1, 1).unwrap();
        let (dw, db) = conv1d_param_grads(&x, &up, 1, 1, 1, 1).unwrap();
        assert_eq!(dx.data(), &[w0]);
        assert_eq!(dw, vec![a]);
        assert_eq!(db, vec![1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let x = Tensor::from_vec(Shape::new(2, 2, 5), vec![0.3; 20]).unwrap();
        let up = Tensor::zeros(Shape::new(2, 3, 5));
        let w = vec![0.1; 3 * 2 * 3];
        let dx = conv1d_input_grad(&up, &w, 3, 2, 3, 1, 5).unwrap();
        let (dw, db) = conv1d_param_grads(&x, &up, 3, 2, 3, 1).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(dw.iter().all(|&v| v == 0.0));
        assert!(db.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors_name_the_axis() {
        let x = Tensor::<f64>::zeros(Shape::new(1, 3, 4));
        let err = conv1d_forward(&x, &[0.0; 8], 2, 4, 1, &[0.0; 2], 1).unwrap_err();
        assert!(err.to_string().contains("channel"), "{err}");
        let err = conv1d_forward(&x, &[0.0; 6], 2, 3, 2, &[0.0; 2], 1).unwrap_err();
        assert!(matches!(err, NnError::EvenKernel(2)));
        let err = conv1d_forward(&x, &[0.0; 6], 2, 3, 1, &[0.0; 2], 3).unwrap_err();
        assert!(matches!(err, NnError::UnsupportedStride(3)));
    }

    #[test]
    fn relu_examples() {
        let x = t1(&[-1.0, 0.0, 2.0]);
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let up = t1(&[5.0, 5.0, 5.0]);
        assert_eq!(relu_backward(&x, &up).unwrap().data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn shuffle_interleaves_channel_pairs() {
        let x = Tensor::from_vec(
            Shape::new(1, 2, 3),
            vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap();
        let y = subpixel_shuffle(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 6));
        assert_eq!(y.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let back = subpixel_unshuffle(&y).unwrap();
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn shuffle_is_a_bijection_preserving_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..20 {
            let n = rng.gen_range(1..=2);
            let c = 2 * rng.gen_range(1..=4);
            let d = rng.gen_range(1..=8);
            let x = Tensor::from_vec(
                Shape::new(n, c, d),
                (0..n * c * d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let y = subpixel_shuffle(&x).unwrap();
            assert_eq!(subpixel_unshuffle(&y).unwrap().data(), x.data());
            let mut a: Vec<f64> = x.data().to_vec();
            let mut b: Vec<f64> = y.data().to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b, "entry multiset changed");
        }
    }

    #[test]
    fn shuffle_rejects_odd_channels() {
        let x = Tensor::<f64>::zeros(Shape::new(1, 3, 4));
        assert!(matches!(subpixel_shuffle(&x), Err(NnError::OddChannels(3))));
    }

    #[test]
    fn concat_and_split_are_adjoint() {
        let a = Tensor::from_vec(Shape::new(1, 1, 2), vec![1.0f64, 2.0]).unwrap();
        let b = Tensor::from_vec(Shape::new(1, 1, 2), vec![3.0f64, 4.0]).unwrap();
        let y = concat_channels(&a, &b).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 2));
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        let (a2, b2) = split_channels(&y, 1).unwrap();
        assert_eq!(a2.data(), a.data());
        assert_eq!(b2.data(), b.data());

        // Concat with a zero-channel tensor is the identity.
        let empty = Tensor::<f64>::zeros(Shape::new(1, 0, 2));
        let same = concat_channels(&a, &empty).unwrap();
        assert_eq!(same.shape(), a.shape());
        assert_eq!(same.data(), a.data());
    }

    #[test]
    fn concat_rejects_length_mismatch() {
        let a = Tensor::<f64>::zeros(Shape::new(1, 1, 2));
        let b = Tensor::<f64>::zeros(Shape::new(1, 1, 3));
        assert!(concat_channels(&a, &b).is_err());
    }

    #[test]
    fn loss_values_on_three_four_five() {
        let pred = t1(&[3.0, 4.0]);
        let target = t1(&[0.0, 0.0]);
        let (mean_sq, _) = mse_loss(&pred, &target, LossMode::MeanSquare).unwrap();
        assert!((mean_sq - 12.5).abs() < 1e-12);
        let (scaled, _) = mse_loss(&pred, &target, LossMode::ScaledNorm).unwrap();
        assert!((scaled - 5.0).abs() < 1e-12);

        let (zero_a, _) = mse_loss(&pred, &pred, LossMode::MeanSquare).unwrap();
        let (zero_b, _) = mse_loss(&pred, &pred, LossMode::ScaledNorm).unwrap();
        assert_eq!(zero_a, 0.0);
        assert_eq!(zero_b, 0.0);
    }

    #[test]
    fn loss_rejects_shape_mismatch() {
        let a = Tensor::<f64>::zeros(Shape::new(1, 1, 2));
        let b = Tensor::<f64>::zeros(Shape::new(1, 1, 3));
        assert!(mse_loss(&a, &b, LossMode::MeanSquare).is_err());
    }
}
