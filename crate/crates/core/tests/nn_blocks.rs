use dyglnet::autodiff::{grad_check, Ctx, GradCheckConfig, ParamId, ParamStore, Tape, Var};
use dyglnet::nn::{
    dyt, init_offsets, DyFusionUp, DyFusionUpConfig, DyT, Ffn, Msdc, ShdcBlock, ShdcConfig, SingleHeadAttention,
    UpsampleMode,
};
use dyglnet::tensor::Mode;
use dyglnet::{Error, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| r.gen_range(-1.0..1.0)).unwrap()
}

/// Runs `f` on a fresh tape and returns the value of its result.
fn eval<F>(store: &ParamStore<f64>, mode: Mode, x: &Tensor<f64>, f: F) -> Tensor<f64>
where
    F: FnOnce(&mut Ctx<'_, f64>, Var) -> dyglnet::Result<Var>,
{
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, store, mode);
    let xv = ctx.tape.constant(x.clone()).unwrap();
    let y = f(&mut ctx, xv).unwrap();
    ctx.value(y).clone()
}

fn zero_all(store: &mut ParamStore<f64>, filter: impl Fn(&str) -> bool) {
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let p = store.get(id);
        if p.trainable && filter(&p.name) {
            let z = Tensor::zeros(p.value.shape()).unwrap();
            store.set_value(id, z).unwrap();
        }
    }
}

/// Gradient check of `sum(block(x) * r)` over every trainable parameter and
/// the input itself.
fn check_block<F>(mut store: ParamStore<f64>, x: Tensor<f64>, mode: Mode, per_param: Option<usize>, f: F) -> f64
where
    F: Fn(&mut Ctx<'_, f64>, Var) -> dyglnet::Result<Var>,
{
    let xid = store.register("input", x, true).unwrap();
    let ids: Vec<ParamId> = store.trainable_ids().collect();
    let cfg = GradCheckConfig {
        max_entries_per_param: per_param,
        ..GradCheckConfig::default()
    };
    let mut weights: Option<Tensor<f64>> = None;
    let report = grad_check(&mut store, &ids, &cfg, |tape, s| {
        let mut ctx = Ctx::new(tape, s, mode);
        let xv = ctx.param(xid)?;
        let y = f(&mut ctx, xv)?;
        let shape = ctx.value(y).shape().to_vec();
        let r = weights.get_or_insert_with(|| random(&shape, 99)).clone();
        let rv = ctx.tape.constant(r)?;
        let prod = ctx.tape.mul(y, rv)?;
        ctx.tape.sum(prod)
    })
    .unwrap();
    assert!(report.passed(), "{report:?}");
    report.max_rel_err
}

// ---- dyt ----

#[test]
fn dyt_layer_matches_direct_evaluation() {
    let mut store = ParamStore::<f64>::new();
    let layer = DyT::new(&mut store, "n", 3).unwrap();
    store.set_value(layer.gamma, Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
    store.set_value(layer.beta, Tensor::new(&[3], vec![0.1, 0.2, 0.3]).unwrap()).unwrap();
    let x = random(&[2, 3, 2, 2], 1);
    let y = eval(&store, Mode::Train, &x, |ctx, v| layer.forward(ctx, v));
    let direct = dyt(&x, &layer.params(&store)).unwrap();
    assert!(y.max_abs_diff(&direct).unwrap() < 1e-15);
}

#[test]
fn dyt_gradients() {
    let mut store = ParamStore::<f64>::new();
    let layer = DyT::new(&mut store, "n", 2).unwrap();
    check_block(store, random(&[1, 2, 3, 3], 2), Mode::Train, None, |ctx, v| layer.forward(ctx, v));
}

proptest! {
    #[test]
    fn dyt_is_monotone(mut xs in prop::collection::vec(-50.0f64..50.0, 2..40), alpha in 0.01f64..5.0, gamma in 0.01f64..5.0, beta in -3.0f64..3.0) {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        let n = xs.len();
        let x = Tensor::new(&[1, 1, 1, n], xs).unwrap();
        let p = dyglnet::nn::DyTParams { alpha, gamma: Tensor::full(&[1], gamma).unwrap(), beta: Tensor::full(&[1], beta).unwrap() };
        let y = dyt(&x, &p).unwrap();
        // tanh saturates in floating point, so only non-decreasing holds at the extremes
        for pair in y.data().windows(2) {
            prop_assert!(pair[1] >= pair[0]);
        }
        let small: Vec<f64> = x.data().iter().copied().filter(|v| (alpha * v).abs() < 5.0).collect();
        if small.len() >= 2 {
            let xs = Tensor::new(&[1, 1, 1, small.len()], small).unwrap();
            let ys = dyt(&xs, &p).unwrap();
            for pair in ys.data().windows(2) {
                prop_assert!(pair[1] > pair[0]);
            }
        }
    }
}

// ---- attention ----

fn attention(channels: usize, dim: usize, seed: u64) -> (ParamStore<f64>, SingleHeadAttention) {
    let mut store = ParamStore::new();
    let attn = SingleHeadAttention::new(&mut store, &mut rng(seed), "attn", channels, dim, true).unwrap();
    (store, attn)
}

#[test]
fn attention_single_token_passes_value_through() {
    let (store, attn) = attention(4, 4, 3);
    let x = random(&[2, 4, 1, 1], 4);
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &store, Mode::Eval);
    let xv = ctx.tape.constant(x).unwrap();
    let tr = attn.trace(&mut ctx, xv).unwrap();
    let qkv = ctx.value(tr.qkv).clone();
    let out = ctx.value(tr.output).clone();
    assert!(ctx.value(tr.weights).data().iter().all(|&w| w == 1.0));
    for n in 0..2 {
        for c in 0..4 {
            assert_eq!(out.data()[n * 4 + c], qkv.data()[n * 12 + 8 + c]);
        }
    }
}

#[test]
fn attention_constant_input_has_uniform_weights() {
    let (store, attn) = attention(4, 4, 5);
    let x = Tensor::full(&[1, 4, 3, 3], 0.7).unwrap();
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &store, Mode::Eval);
    let xv = ctx.tape.constant(x).unwrap();
    let tr = attn.trace(&mut ctx, xv).unwrap();
    for &w in ctx.value(tr.weights).data() {
        assert!((w - 1.0 / 9.0).abs() < 1e-12);
    }
}

#[test]
fn attention_matches_token_loop_oracle() {
    let (store, attn) = attention(8, 8, 6);
    let x = random(&[1, 8, 4, 4], 7);
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &store, Mode::Eval);
    let xv = ctx.tape.constant(x).unwrap();
    let tr = attn.trace(&mut ctx, xv).unwrap();
    let qkv = ctx.value(tr.qkv).data().to_vec();
    let out = ctx.value(tr.output).data().to_vec();
    let (d, t) = (8usize, 16usize);
    let at = |part: usize, c: usize, tok: usize| qkv[(part * d + c) * t + tok];
    for q in 0..t {
        let scores: Vec<f64> = (0..t)
            .map(|k| (0..d).map(|c| at(0, c, q) * at(1, c, k)).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let max = scores.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for c in 0..d {
            let want: f64 = (0..t).map(|k| exps[k] / total * at(2, c, k)).sum();
            assert!((out[c * t + q] - want).abs() < 1e-6);
        }
    }
}

#[test]
fn attention_rejects_zero_dim() {
    let mut store = ParamStore::<f64>::new();
    assert!(matches!(
        SingleHeadAttention::new(&mut store, &mut rng(0), "a", 4, 0, true),
        Err(Error::Config(_))
    ));
}

#[test]
fn attention_gradients_with_projection() {
    let (store, attn) = attention(4, 3, 8);
    assert!(attn.out.is_some());
    check_block(store, random(&[2, 4, 2, 3], 9), Mode::Train, None, |ctx, v| attn.forward(ctx, v));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn attention_rows_sum_to_one(seed in 0u64..1000, h in 1usize..5, w in 1usize..5, scale in 0.1f64..100.0) {
        let (store, attn) = attention(4, 4, seed);
        let x = random(&[1, 4, h, w], seed + 1).map(|v| v * scale);
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &store, Mode::Eval);
        let xv = ctx.tape.constant(x).unwrap();
        let tr = attn.trace(&mut ctx, xv).unwrap();
        let t = h * w;
        for row in ctx.value(tr.weights).data().chunks(t) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

// ---- msdc ----

#[test]
fn msdc_with_zero_branches_is_identity() {
    let mut store = ParamStore::<f64>::new();
    let m = Msdc::new(&mut store, &mut rng(1), "m", 3, &[1, 2, 3]).unwrap();
    zero_all(&mut store, |n| n.contains(".dw"));
    let x = random(&[2, 3, 5, 5], 2);
    let y = eval(&store, Mode::Eval, &x, |ctx, v| m.forward(ctx, v));
    assert!(y.max_abs_diff(&x).unwrap() < 1e-5 * 2.0);
    // exact up to the eps inside the running-variance normalization
    let scale = 1.0 / (1.0f64 + 1e-5).sqrt();
    assert!(y.max_abs_diff(&x.map(|v| v * scale)).unwrap() < 1e-12);
}

#[test]
fn msdc_delta_kernels_quadruple() {
    let mut store = ParamStore::<f64>::new();
    let m = Msdc::new(&mut store, &mut rng(1), "m", 2, &[1, 2, 3]).unwrap();
    let delta = Tensor::from_fn(&[2, 1, 3, 3], |i| if i % 9 == 4 { 1.0 } else { 0.0 }).unwrap();
    for &(id, _) in &m.branches {
        store.set_value(id, delta.clone()).unwrap();
    }
    let x = random(&[1, 2, 4, 6], 3);
    let y = eval(&store, Mode::Eval, &x, |ctx, v| m.pre_norm(ctx, v));
    assert!(y.max_abs_diff(&x.map(|v| 4.0 * v)).unwrap() < 1e-12);
}

#[test]
fn msdc_matches_dilated_loop_oracle() {
    let mut store = ParamStore::<f64>::new();
    let m = Msdc::new(&mut store, &mut rng(4), "m", 3, &[1, 2, 3]).unwrap();
    let x = random(&[2, 3, 7, 6], 5);
    let y = eval(&store, Mode::Eval, &x, |ctx, v| m.pre_norm(ctx, v));
    let (n, c, h, w) = (2, 3, 7usize, 6usize);
    let xd = x.data();
    for ni in 0..n {
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let mut want = xd[((ni * c + ch) * h + i) * w + j];
                    for &(id, r) in &m.branches {
                        let k = store.value(id).data();
                        for ki in 0..3 {
                            for kj in 0..3 {
                                let si = i as isize + (ki as isize - 1) * r as isize;
                                let sj = j as isize + (kj as isize - 1) * r as isize;
                                if si >= 0 && sj >= 0 && (si as usize) < h && (sj as usize) < w {
                                    want += k[ch * 9 + ki * 3 + kj]
                                        * xd[((ni * c + ch) * h + si as usize) * w + sj as usize];
                                }
                            }
                        }
                    }
                    let got = y.data()[((ni * c + ch) * h + i) * w + j];
                    assert!((got - want).abs() < 1e-6);
                }
            }
        }
    }
}

#[test]
fn msdc_gradients() {
    let mut store = ParamStore::<f64>::new();
    let m = Msdc::new(&mut store, &mut rng(6), "m", 2, &[1, 2, 3]).unwrap();
    check_block(store, random(&[2, 2, 5, 5], 7), Mode::Train, None, |ctx, v| m.forward(ctx, v));
}

// ---- ffn ----

#[test]
fn ffn_zero_weights_is_identity() {
    let mut store = ParamStore::<f64>::new();
    let f = Ffn::new(&mut store, &mut rng(1), "ffn", 3, 4.0).unwrap();
    zero_all(&mut store, |_| true);
    let x = random(&[1, 3, 3, 3], 2);
    let y = eval(&store, Mode::Eval, &x, |ctx, v| f.forward(ctx, v));
    assert_eq!(y.data(), x.data());
}

#[test]
fn ffn_identity_weights_double_positive_input() {
    let mut store = ParamStore::<f64>::new();
    let f = Ffn::new(&mut store, &mut rng(1), "ffn", 2, 1.0).unwrap();
    zero_all(&mut store, |_| true);
    let eye = Tensor::new(&[2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    store.set_value(f.expand.weight, eye.clone()).unwrap();
    store.set_value(f.project.weight, eye).unwrap();
    let x = Tensor::full(&[1, 2, 2, 2], 1.5).unwrap();
    let y = eval(&store, Mode::Eval, &x, |ctx, v| f.forward(ctx, v));
    assert!(y.data().iter().all(|&v| v == 3.0));
}

#[test]
fn ffn_gradients() {
    let mut store = ParamStore::<f64>::new();
    let f = Ffn::new(&mut store, &mut rng(3), "ffn", 3, 2.0).unwrap();
    check_block(store, random(&[2, 3, 3, 3], 4), Mode::Train, None, |ctx, v| f.forward(ctx, v));
}

// ---- shdc ----

#[test]
fn shdc_without_fusion_and_zero_weights_is_identity() {
    let mut store = ParamStore::<f64>::new();
    let cfg = ShdcConfig { use_fusion: false, ..ShdcConfig::new(4) };
    let b = ShdcBlock::new(&mut store, &mut rng(1), "b", cfg).unwrap();
    assert!(b.fusion.is_none());
    zero_all(&mut store, |_| true);
    let x = random(&[1, 4, 5, 5], 2);
    let y = eval(&store, Mode::Train, &x, |ctx, v| b.forward(ctx, v));
    assert_eq!(y.data(), x.data());
}

#[test]
fn shdc_split_sizes() {
    let cfg = ShdcConfig::new(48);
    assert_eq!(cfg.split_sizes().unwrap(), (24, 24));
    let mut store = ParamStore::<f64>::new();
    let b = ShdcBlock::new(&mut store, &mut rng(1), "b", cfg).unwrap();
    let x = random(&[1, 48, 4, 4], 3);
    let y = eval(&store, Mode::Train, &x, |ctx, v| b.forward(ctx, v));
    assert_eq!(y.shape(), &[1, 48, 4, 4]);
}

#[test]
fn shdc_config_errors() {
    let mut store = ParamStore::<f64>::new();
    for cfg in [
        ShdcConfig { split_ratio: 0.1, ..ShdcConfig::new(4) },
        ShdcConfig { split_ratio: 1.0, ..ShdcConfig::new(4) },
        ShdcConfig { dilation_rates: vec![], ..ShdcConfig::new(4) },
        ShdcConfig { dilation_rates: vec![1, 0], ..ShdcConfig::new(4) },
        ShdcConfig { ffn_ratio: 0.0, ..ShdcConfig::new(4) },
        ShdcConfig { attn_dim: Some(0), ..ShdcConfig::new(4) },
    ] {
        assert!(matches!(ShdcBlock::new(&mut store, &mut rng(0), "x", cfg), Err(Error::Config(_))));
    }
}

#[test]
fn shdc_gradients() {
    for (seed, use_dyt) in [(11u64, true), (12, false)] {
        let mut store = ParamStore::<f64>::new();
        let cfg = ShdcConfig { ffn_ratio: 2.0, use_dyt, ..ShdcConfig::new(4) };
        let b = ShdcBlock::new(&mut store, &mut rng(seed), "b", cfg).unwrap();
        check_block(store, random(&[2, 4, 3, 3], seed), Mode::Train, None, |ctx, v| b.forward(ctx, v));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn shdc_preserves_shape(c in 2usize..10, h in 1usize..6, w in 1usize..6, n in 1usize..3, fusion in any::<bool>(), seed in 0u64..100) {
        let cfg = ShdcConfig { use_fusion: fusion, ..ShdcConfig::new(c) };
        prop_assume!(!fusion || cfg.split_sizes().is_ok());
        prop_assume!(n * h * w > 1);
        let mut store = ParamStore::<f64>::new();
        let b = ShdcBlock::new(&mut store, &mut rng(seed), "b", cfg).unwrap();
        let x = random(&[n, c, h, w], seed);
        let y = eval(&store, Mode::Train, &x, |ctx, v| b.forward(ctx, v));
        prop_assert_eq!(y.shape(), &[n, c, h, w]);
    }
}

// ---- offsets and upsampling ----

#[test]
fn offsets_are_the_quarter_pixel_lattice() {
    let p = init_offsets::<f64>(3, 2).unwrap();
    assert_eq!(p.shape(), &[3, 4, 2]);
    let first: Vec<(f64, f64)> = p.data()[..8].chunks(2).map(|c| (c[0], c[1])).collect();
    assert_eq!(first, vec![(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)]);
    for grp in p.data().chunks(8) {
        assert_eq!(grp, &p.data()[..8]);
    }
    let mean_x: f64 = first.iter().map(|o| o.0).sum::<f64>() / 4.0;
    let mean_y: f64 = first.iter().map(|o| o.1).sum::<f64>() / 4.0;
    assert_eq!((mean_x, mean_y), (0.0, 0.0));
    assert!(matches!(init_offsets::<f64>(1, 3), Err(Error::UnsupportedScale(3))));
}

/// Bilinear 2x upsampling at quarter-pixel positions with border clamping.
fn quarter_pixel_oracle(x: &Tensor<f64>) -> Tensor<f64> {
    let (n, c, h, w) = x.dims4().unwrap();
    let xd = x.data();
    Tensor::from_fn(&[n, c, 2 * h, 2 * w], |i| {
        let oj = i % (2 * w);
        let oi = (i / (2 * w)) % (2 * h);
        let plane = i / (4 * h * w);
        let sy = ((oi as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (h - 1) as f64);
        let sx = ((oj as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (w - 1) as f64);
        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
        let at = |y: usize, x: usize| xd[plane * h * w + y * w + x];
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
        let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
        top * (1.0 - fy) + bot * fy
    })
    .unwrap()
}

fn upsampler(cin: usize, c: usize, groups: usize, mode: UpsampleMode, seed: u64) -> (ParamStore<f64>, DyFusionUp) {
    let mut store = ParamStore::new();
    let cfg = DyFusionUpConfig { groups, mode, ..DyFusionUpConfig::new(cin, c) };
    let up = DyFusionUp::new(&mut store, &mut rng(seed), "up", cfg).unwrap();
    (store, up)
}

#[test]
fn zero_offsets_reduce_to_quarter_pixel_bilinear() {
    let (store, up) = upsampler(1, 1, 1, UpsampleMode::Dynamic, 0);
    let x = Tensor::new(&[1, 1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let y = eval(&store, Mode::Eval, &x, |ctx, v| up.upsample(ctx, v));
    assert_eq!(y.shape(), &[1, 1, 4, 4]);
    assert_eq!(y.data()[0], 0.0);
    assert!(y.max_abs_diff(&quarter_pixel_oracle(&x)).unwrap() < 1e-6);
    // interior sample at (0.25, 0.25): 0.75*0.75*0 + 0.75*0.25*1 + 0.25*0.75*2 + 0.25*0.25*3
    assert!((y.data()[5] - 0.75).abs() < 1e-12);

    let (store, up) = upsampler(8, 4, 4, UpsampleMode::Dynamic, 1);
    let x = random(&[2, 8, 3, 5], 2);
    let y = eval(&store, Mode::Eval, &x, |ctx, v| up.upsample(ctx, v));
    assert!(y.max_abs_diff(&quarter_pixel_oracle(&x)).unwrap() < 1e-6);
}

#[test]
fn unit_raw_offsets_shift_by_a_quarter_pixel() {
    let (mut store, up) = upsampler(4, 2, 2, UpsampleMode::Dynamic, 3);
    let bias = up.offset.as_ref().unwrap().bias.unwrap();
    let (h, w) = (3usize, 5usize);
    let x = random(&[1, 4, h, w], 4);
    let base = eval(&store, Mode::Eval, &x, |ctx, v| up.sampling_grid(ctx, v));
    store.set_value(bias, Tensor::ones(&[16]).unwrap()).unwrap();
    let moved = eval(&store, Mode::Eval, &x, |ctx, v| up.sampling_grid(ctx, v));
    for (i, (a, b)) in base.data().iter().zip(moved.data()).enumerate() {
        let extent = if i % 2 == 0 { w } else { h } as f64;
        // back to pixel units
        assert!(((b - a) * extent / 2.0 - 0.25).abs() < 1e-12);
    }
}

#[test]
fn zero_offsets_match_static_upsampler_end_to_end() {
    let (s_dyn, dynamic) = upsampler(8, 4, 4, UpsampleMode::Dynamic, 5);
    let (s_bil, bilinear) = upsampler(8, 4, 4, UpsampleMode::Bilinear, 5);
    let low = random(&[2, 8, 3, 3], 6);
    let skip = random(&[2, 4, 6, 6], 7);
    let run = |store: &ParamStore<f64>, up: &DyFusionUp| {
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, store, Mode::Train);
        let (l, s) = (ctx.tape.constant(low.clone()).unwrap(), ctx.tape.constant(skip.clone()).unwrap());
        let y = up.forward(&mut ctx, l, s).unwrap();
        ctx.value(y).clone()
    };
    let a = run(&s_dyn, &dynamic);
    let b = run(&s_bil, &bilinear);
    assert_eq!(a.shape(), &[2, 4, 6, 6]);
    assert!(a.max_abs_diff(&b).unwrap() < 1e-6);
}

#[test]
fn spatial_mismatch_is_rejected() {
    let (store, up) = upsampler(4, 2, 2, UpsampleMode::Dynamic, 0);
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &store, Mode::Train);
    let l = ctx.tape.constant(random(&[1, 4, 3, 3], 1)).unwrap();
    let s = ctx.tape.constant(random(&[1, 2, 5, 6], 2)).unwrap();
    assert!(matches!(up.forward(&mut ctx, l, s), Err(Error::Dimension(_))));
}

#[test]
fn upsampler_config_errors() {
    let mut store = ParamStore::<f64>::new();
    let bad_groups = DyFusionUpConfig { groups: 3, ..DyFusionUpConfig::new(8, 4) };
    assert!(matches!(DyFusionUp::new(&mut store, &mut rng(0), "a", bad_groups), Err(Error::Config(_))));
    let bad_scale = DyFusionUpConfig { scale: 4, ..DyFusionUpConfig::new(8, 4) };
    assert!(matches!(DyFusionUp::new(&mut store, &mut rng(0), "b", bad_scale), Err(Error::UnsupportedScale(4))));
    assert_eq!(DyFusionUpConfig::new(8, 4).offset_channels(), 32);
}

#[test]
fn upsampler_gradients_including_offsets() {
    let (mut store, up) = upsampler(4, 2, 2, UpsampleMode::Dynamic, 8);
    // move off the lattice so the offset path is exercised away from zero
    let off = up.offset.as_ref().unwrap();
    store.set_value(off.weight, random(&[16, 4, 1, 1], 9).map(|v| v * 0.8)).unwrap();
    store.set_value(off.bias.unwrap(), random(&[16], 10)).unwrap();
    let skip = random(&[2, 2, 6, 4], 11);
    let err = check_block(store, random(&[2, 4, 3, 2], 12), Mode::Train, None, |ctx, v| {
        let s = ctx.tape.constant(skip.clone())?;
        up.forward(ctx, v, s)
    });
    assert!(err < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn upsampler_preserves_shape(groups in 1usize..4, per in 1usize..3, c in 1usize..5, h in 1usize..5, w in 1usize..5, n in 1usize..3) {
        let cin = groups * per;
        let (store, up) = upsampler(cin, c, groups, UpsampleMode::Dynamic, 1);
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &store, Mode::Train);
        let l = ctx.tape.constant(random(&[n, cin, h, w], 2)).unwrap();
        let s = ctx.tape.constant(random(&[n, c, 2 * h, 2 * w], 3)).unwrap();
        let y = up.forward(&mut ctx, l, s).unwrap();
        prop_assert_eq!(ctx.value(y).shape(), &[n, c, 2 * h, 2 * w]);
    }
}
