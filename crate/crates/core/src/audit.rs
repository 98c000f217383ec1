//! Finite-difference audit of every differentiable op and the composed
//! network.
//!
//! All checks run in f64. Ops without a ReLU in the path use the standard
//! step `h = 1e-4`; compositions containing ReLU use `h = 1e-6` so the
//! probability of a mask flip under perturbation is negligible while f64
//! roundoff still leaves plenty of headroom below the 1e-4 tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{AudioUNet, ModelConfig};
use crate::nn::{
    check_gradients, concat_channels, conv1d_forward, conv1d_input_grad, conv1d_param_grads,
    mse_loss, relu_backward, relu_forward, split_channels, subpixel_shuffle, subpixel_unshuffle,
    BatchNorm1d, GradCheckReport, LossMode, ParamStore, Shape, Tensor,
};

/// Audit tolerance on the relative error between analytic gradients and
/// central finite differences.
pub const AUDIT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct AuditSection {
    pub name: String,
    pub cases: usize,
    pub worst_rel_err: f64,
    pub tolerance: f64,
}

impl AuditSection {
    pub fn passed(&self) -> bool {
        self.worst_rel_err <= self.tolerance
    }
}

#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    pub sections: Vec<AuditSection>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.sections.iter().all(AuditSection::passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for sec in &self.sections {
            s.push_str(&format!(
                "{}  {:<12} {:2} cases  worst rel err {:.3e}  (tol {:.0e})\n",
                if sec.passed() { "ok  " } else { "FAIL" },
                sec.name,
                sec.cases,
                sec.worst_rel_err,
                sec.tolerance
            ));
        }
        s.push_str(if self.passed() {
            "gradient audit passed\n"
        } else {
            "gradient audit FAILED\n"
        });
        s
    }
}

fn run_section(
    name: &str,
    base_seed: u64,
    cases: usize,
    f: impl Fn(u64) -> GradCheckReport,
) -> AuditSection {
    let mut worst = 0.0f64;
    for i in 0..cases {
        let report = f(base_seed.wrapping_add(i as u64 * 7919));
        worst = worst.max(report.worst());
    }
    AuditSection {
        name: name.to_string(),
        cases,
        worst_rel_err: worst,
        tolerance: AUDIT_TOLERANCE,
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn conv_case(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=2);
    let cin = rng.gen_range(1..=3);
    let cout = rng.gen_range(1..=3);
    let d = rng.gen_range(2..=8);
    let k = [1usize, 3, 5][rng.gen_range(0..3)];
    let stride = if seed % 2 == 0 { 1 } else { 2 };
    let out_len = (d + stride - 1) / stride;

    let mut store = ParamStore::<f64>::new();
    let w = store
        .register(
            "w",
            &[cout, cin, k],
            rand_vec(&mut rng, cout * cin * k, -1.0, 1.0),
            true,
        )
        .unwrap();
    let b = store
        .register("b", &[cout], rand_vec(&mut rng, cout, -0.5, 0.5), true)
        .unwrap();
    let x = store
        .register(
            "x",
            &[n, cin, d],
            rand_vec(&mut rng, n * cin * d, -1.0, 1.0),
            true,
        )
        .unwrap();
    let target = Tensor::from_vec(
        Shape::new(n, cout, out_len),
        rand_vec(&mut rng, n * cout * out_len, -1.0, 1.0),
    )
    .unwrap();

    check_gradients(
        &mut store,
        move |store, acc| {
            let xt = Tensor::from_vec(Shape::new(n, cin, d), store.data(x).to_vec()).unwrap();
            let wv = store.data(w).to_vec();
            let bv = store.data(b).to_vec();
            let out = conv1d_forward(&xt, &wv, cout, cin, k, &bv, stride).unwrap();
            let (loss, dloss) = mse_loss(&out, &target, LossMode::MeanSquare).unwrap();
            if acc {
                let (dw, db) = conv1d_param_grads(&xt, &dloss, cout, cin, k, stride).unwrap();
                let dx = conv1d_input_grad(&dloss, &wv, cout, cin, k, stride, d).unwrap();
                store.accumulate_grad(w, &dw);
                store.accumulate_grad(b, &db);
                store.accumulate_grad(x, dx.data());
            }
            loss
        },
        1e-4,
        AUDIT_TOLERANCE,
    )
}

fn batchnorm_case(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=2);
    let c = rng.gen_range(1..=3);
    let d = rng.gen_range(3..=8);
    let mut store = ParamStore::<f64>::new();
    let bn = BatchNorm1d::new(&mut store, "bn", c).unwrap();
    // Move gamma/beta off their init so the check is not vacuous.
    for id in [bn.gamma, bn.beta] {
        let p = store.get_mut(id);
        for v in &mut p.data {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let x = store
        .register(
            "x",
            &[n, c, d],
            rand_vec(&mut rng, n * c * d, -1.0, 1.0),
            true,
        )
        .unwrap();
    let target =
        Tensor::from_vec(Shape::new(n, c, d), rand_vec(&mut rng, n * c * d, -1.0, 1.0)).unwrap();

    check_gradients(
        &mut store,
        move |store, acc| {
            let xt = Tensor::from_vec(Shape::new(n, c, d), store.data(x).to_vec()).unwrap();
            let (out, cache) = bn.forward_train(store, &xt).unwrap();
            let (loss, dloss) = mse_loss(&out, &target, LossMode::MeanSquare).unwrap();
            if acc {
                let dx = bn.backward(store, &cache, &dloss).unwrap();
                store.accumulate_grad(x, dx.data());
            }
            loss
        },
        1e-4,
        AUDIT_TOLERANCE,
    )
}

fn relu_case(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(4..=16);
    // Inputs bounded away from the kink at zero.
    let data: Vec<f64> = (0..d)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            sign * rng.gen_range(0.1..1.0)
        })
        .collect();
    let mut store = ParamStore::<f64>::new();
    let x = store.register("x", &[1, 1, d], data, true).unwrap();
    let target = Tensor::from_vec(Shape::new(1, 1, d), rand_vec(&mut rng, d, -1.0, 1.0)).unwrap();

    check_gradients(
        &mut store,
        move |store, acc| {
            let xt = Tensor::from_vec(Shape::new(1, 1, d), store.data(x).to_vec()).unwrap();
            let out = relu_forward(&xt);
            let (loss, dloss) = mse_loss(&out, &target, LossMode::MeanSquare).unwrap();
            if acc {
                let dx = relu_backward(&xt, &dloss).unwrap();
                store.accumulate_grad(x, dx.data());
            }
            loss
        },
        1e-4,
        AUDIT_TOLERANCE,
    )
}

fn subpixel_case(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=2);
    let c = 2 * rng.gen_range(1..=3);
    let d = rng.gen_range(2..=6);
    let mut store = ParamStore::<f64>::new();
    let x = store
        .register(
            "x",
            &[n, c, d],
            rand_vec(&mut rng, n * c * d, -1.0, 1.0),
            true,
        )
        .unwrap();
    let target = Tensor::from_vec(
        Shape::new(n, c / 2, 2 * d),
        rand_vec(&mut rng, n * c * d, -1.0, 1.0),
    )
    .unwrap();

    check_gradients(
        &mut store,
        move |store, acc| {
            let xt = Tensor::from_vec(Shape::new(n, c, d), store.data(x).to_vec()).unwrap();
            let out = subpixel_shuffle(&xt).unwrap();
            let (loss, dloss) = mse_loss(&out, &target, LossMode::MeanSquare).unwrap();
            if acc {
                let dx = subpixel_unshuffle(&dloss).unwrap();
                store.accumulate_grad(x, dx.data());
            }
            loss
        },
        1e-4,
        AUDIT_TOLERANCE,
    )
}

fn concat_case(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=2);
    let (ca, cb) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let d = rng.gen_range(2..=6);
    let mut store = ParamStore::<f64>::new();
    let a = store
        .register(
            "a",
            &[n, ca, d],
            rand_vec(&mut rng, n * ca * d, -1.0, 1.0),
            true,
        )
        .unwrap();
    let b = store
        .register(
            "b",
            &[n, cb, d],
            rand_vec(&mut rng, n * cb * d, -1.0, 1.0),
            true,
        )
        .unwrap();
    let target = Tensor::from_vec(
        Shape::new(n, ca + cb, d),
        rand_vec(&mut rng, n * (ca + cb) * d, -1.0, 1.0),
    )
    .unwrap();

    check_gradients(
        &mut store,
        move |store, acc| {
            let at = Tensor::from_vec(Shape::new(n, ca, d), store.data(a).to_vec()).unwrap();
            let bt = Tensor::from_vec(Shape::new(n, cb, d), store.data(b).to_vec()).unwrap();
            let out = concat_channels(&at, &bt).unwrap();
            let (loss, dloss) = mse_loss(&out, &target, LossMode::MeanSquare).unwrap();
            if acc {
                let (da, db) = split_channels(&dloss, ca).unwrap();
                store.accumulate_grad(a, da.data());
                store.accumulate_grad(b, db.data());
            }
            loss
        },
        1e-4,
        AUDIT_TOLERANCE,
    )
}

fn mse_case(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(2..=12);
    let mut store = ParamStore::<f64>::new();
    let pred = store
        .register("pred", &[1, 1, d], rand_vec(&mut rng, d, -1.0, 1.0), true)
        .unwrap();
    let target = Tensor::from_vec(Shape::new(1, 1, d), rand_vec(&mut rng, d, -1.0, 1.0)).unwrap();
    let mode = if seed % 2 == 0 {
        LossMode::MeanSquare
    } else {
        LossMode::ScaledNorm
    };

    check_gradients(
        &mut store,
        move |store, acc| {
            let p = Tensor::from_vec(Shape::new(1, 1, d), store.data(pred).to_vec()).unwrap();
            let (loss, dloss) = mse_loss(&p, &target, mode).unwrap();
            if acc {
                store.accumulate_grad(pred, dloss.data());
            }
            loss
        },
        1e-4,
        AUDIT_TOLERANCE,
    )
}

/// Full upsampling block: conv + batch norm + ReLU + subpixel shuffle.
fn up_block_case(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=2);
    let cin = rng.gen_range(1..=3);
    let cout = 2 * rng.gen_range(1..=2);
    let d = rng.gen_range(2..=6);
    let k = [3usize, 5][rng.gen_range(0..2)];
    let mut store = ParamStore::<f64>::new();
    let conv = crate::nn::Conv1d::new(&mut store, "conv", cin, cout, k, 1, &mut rng).unwrap();
    let bn = BatchNorm1d::new(&mut store, "bn", cout).unwrap();
    for id in [bn.gamma, bn.beta] {
        let p = store.get_mut(id);
        for v in &mut p.data {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let x = store
        .register(
            "x",
            &[n, cin, d],
            rand_vec(&mut rng, n * cin * d, -1.0, 1.0),
            true,
        )
        .unwrap();
    let target = Tensor::from_vec(
        Shape::new(n, cout / 2, 2 * d),
        rand_vec(&mut rng, n * cout * d, -1.0, 1.0),
    )
    .unwrap();

    check_gradients(
        &mut store,
        move |store, acc| {
            let xt = Tensor::from_vec(Shape::new(n, cin, d), store.data(x).to_vec()).unwrap();
            let c = conv.forward(store, &xt).unwrap();
            let (normed, cache) = bn.forward_train(store, &c).unwrap();
            let r = relu_forward(&normed);
            let out = subpixel_shuffle(&r).unwrap();
            let (loss, dloss) = mse_loss(&out, &target, LossMode::MeanSquare).unwrap();
            if acc {
                let d_r = subpixel_unshuffle(&dloss).unwrap();
                let d_norm = relu_backward(&normed, &d_r).unwrap();
                let d_conv = bn.backward(store, &cache, &d_norm).unwrap();
                let dx = conv.backward(store, &xt, &d_conv).unwrap();
                store.accumulate_grad(x, dx.data());
            }
            loss
        },
        1e-6,
        AUDIT_TOLERANCE,
    )
}

/// Composed two-block network at length 64 with at most 8 channels.
fn model_case(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A);
    let cfg = ModelConfig {
        blocks: 2,
        patch_length: 64,
        use_skip_concat: true,
        use_additive_residual: true,
        filters_down: vec![4, 8],
        kernels_down: vec![9, 9],
        filters_up: vec![8, 4],
        kernels_up: vec![9, 9],
    };
    let mut net = AudioUNet::<f64>::build(&cfg, seed).unwrap();
    // The final layer is zero-initialized for training; randomize it here so
    // gradients actually flow to every parameter.
    for name in ["final.conv.w", "final.conv.b"] {
        let id = net.store().by_name(name).unwrap();
        for v in &mut net.store_mut().get_mut(id).data {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    let d = cfg.patch_length;
    let (arch, store) = net.parts_mut();
    let input = store
        .register("audit.input", &[1, 1, d], rand_vec(&mut rng, d, -1.0, 1.0), true)
        .unwrap();
    let target = Tensor::from_vec(Shape::new(1, 1, d), rand_vec(&mut rng, d, -1.0, 1.0)).unwrap();

    check_gradients(
        store,
        move |store, acc| {
            let x = Tensor::from_vec(Shape::new(1, 1, d), store.data(input).to_vec()).unwrap();
            let (out, trace) = arch.forward_train(store, &x).unwrap();
            let (loss, dloss) = mse_loss(&out, &target, LossMode::MeanSquare).unwrap();
            if acc {
                let dx = arch.backward(store, &trace, &dloss).unwrap();
                store.accumulate_grad(input, dx.data());
            }
            loss
        },
        1e-6,
        AUDIT_TOLERANCE,
    )
}

/// Runs the whole audit: every op over `cases` seeded shapes plus the
/// composed two-block model.
pub fn run_full_audit(seed: u64, cases: usize) -> AuditReport {
    let sections: Vec<(&str, fn(u64) -> GradCheckReport)> = vec![
        ("conv1d", conv_case),
        ("batchnorm", batchnorm_case),
        ("relu", relu_case),
        ("subpixel", subpixel_case),
        ("concat", concat_case),
        ("mse", mse_case),
        ("up_block", up_block_case),
        ("model_b2", model_case),
    ];
    let mut report = AuditReport::default();
    for (i, (name, f)) in sections.into_iter().enumerate() {
        report
            .sections
            .push(run_section(name, seed.wrapping_add(i as u64), cases, f));
    }
    report
}
