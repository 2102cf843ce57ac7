//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so the lines are printed even when everything passes; exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use dyglnet::autodiff::{Ctx, ParamStore, Tape};
use dyglnet::data::synth_dataset;
use dyglnet::loss::{bce_loss, dice_loss, hybrid_loss, LossConfig};
use dyglnet::metrics::evaluate;
use dyglnet::network::{Model, REFERENCE_PARAMS};
use dyglnet::nn::{DyFusionUp, DyFusionUpConfig, SingleHeadAttention, UpsampleMode};
use dyglnet::tensor::{bilinear_sample, conv2d, matmul, sigmoid_scalar as sigmoid, Mode};
use dyglnet::train::{adamw_step, lr_at, run_suite, train, AdamState, SampleSource, TrainData};
use dyglnet::{ConvSpec, Error, ModelConfig, Tensor, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.gen_range(lo..hi)).unwrap()
}

fn max_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---- 1 ----

fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    let rows = match run_suite(None, 5) {
        Ok(rows) => rows,
        Err(e) => return outcome(false, format!("suite error: {e}")),
    };
    let elapsed = t.elapsed();
    let worst = rows.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed || r.seeds < 5).map(|r| r.block).collect();
    let ok = failed.is_empty() && rows.len() == 10 && elapsed < Duration::from_secs(300);
    outcome(
        ok,
        format!(
            "{} blocks x 5 seeds, worst max_rel_err {worst:.2e} (< 1e-4), {:.1}s (< 300s){}",
            rows.len(),
            elapsed.as_secs_f64(),
            if failed.is_empty() { String::new() } else { format!(", failing: {}", failed.join(", ")) }
        ),
    )
}

// ---- 2 ----

fn conv_oracle(x: &Tensor<f64>, wt: &Tensor<f64>, bias: Option<&Tensor<f64>>, s: ConvSpec) -> Tensor<f64> {
    let (n, cin, h, w) = x.dims4().unwrap();
    let (cout, cg, kh, kw) = wt.dims4().unwrap();
    let oh = (h + 2 * s.padding - s.dilation * (kh - 1) - 1) / s.stride + 1;
    let ow = (w + 2 * s.padding - s.dilation * (kw - 1) - 1) / s.stride + 1;
    let per_group_out = cout / s.groups;
    let mut out = vec![0.0; n * cout * oh * ow];
    for b in 0..n {
        for co in 0..cout {
            let grp = co / per_group_out;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |t| t.data()[co]);
                    for ci in 0..cg {
                        let c = grp * cg + ci;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * s.stride + ky * s.dilation) as isize - s.padding as isize;
                                let ix = (ox * s.stride + kx * s.dilation) as isize - s.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x.data()[((b * cin + c) * h + iy as usize) * w + ix as usize]
                                    * wt.data()[((co * cg + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((b * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::new(&[n, cout, oh, ow], out).unwrap()
}

fn conv_cases(r: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 200 {
        let groups = r.gen_range(1..=3);
        let (cin, cout) = (groups * r.gen_range(1..=3), groups * r.gen_range(1..=3));
        let (kh, kw) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let spec = ConvSpec::new(r.gen_range(1..=2), r.gen_range(0..=2), r.gen_range(1..=3), groups);
        let (h, w) = (r.gen_range(1..=9), r.gen_range(1..=9));
        if spec.output_extent(h, kh).is_err() || spec.output_extent(w, kw).is_err() {
            continue;
        }
        let n = r.gen_range(1..=2);
        let x = random(r, &[n, cin, h, w], -1.0, 1.0);
        let wt = random(r, &[cout, cin / groups, kh, kw], -1.0, 1.0);
        let bias = r.gen_bool(0.5).then(|| random(r, &[cout], -1.0, 1.0));
        let got = conv2d(&x, &wt, bias.as_ref(), spec).unwrap();
        worst = worst.max(max_diff(&got, &conv_oracle(&x, &wt, bias.as_ref(), spec)));
        done += 1;
    }
    worst
}

fn matmul_cases(r: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let (m, k, p) = (r.gen_range(1..=7), r.gen_range(1..=7), r.gen_range(1..=7));
        let batch = r.gen_range(1..=3);
        // plain, batched, and batched against a shared right operand
        let (a_shape, b_shape) = match case % 3 {
            0 => (vec![m, k], vec![k, p]),
            1 => (vec![batch, m, k], vec![batch, k, p]),
            _ => (vec![batch, m, k], vec![k, p]),
        };
        let a = random(r, &a_shape, -2.0, 2.0);
        let b = random(r, &b_shape, -2.0, 2.0);
        let got = matmul(&a, &b).unwrap();
        let nb = if a_shape.len() == 3 { batch } else { 1 };
        let shared = b_shape.len() == 2;
        let mut want = Vec::with_capacity(nb * m * p);
        for bi in 0..nb {
            for i in 0..m {
                for j in 0..p {
                    let mut s = 0.0;
                    for t in 0..k {
                        let bv = if shared { b.data()[t * p + j] } else { b.data()[(bi * k + t) * p + j] };
                        s += a.data()[(bi * m + i) * k + t] * bv;
                    }
                    want.push(s);
                }
            }
        }
        let want = Tensor::new(got.shape(), want).unwrap();
        worst = worst.max(max_diff(&got, &want));
    }
    worst
}

/// Whole attention block from its parameters: DyT, Q/K/V projection,
/// token softmax attention, optional output projection.
fn attention_oracle(store: &ParamStore<f64>, x: &Tensor<f64>, dim: usize) -> Tensor<f64> {
    let (n, c, h, w) = x.dims4().unwrap();
    let t = h * w;
    let get = |name: &str| store.value(store.id(name).unwrap()).data().to_vec();
    let (alpha, gamma, beta) = (get("attn.norm.alpha")[0], get("attn.norm.weight"), get("attn.norm.bias"));
    let qkv_w = get("attn.qkv.weight");
    let proj = store.id("attn.proj.weight").map(|_| (get("attn.proj.weight"), get("attn.proj.bias")));
    let mut out = vec![0.0; n * c * t];
    for b in 0..n {
        let normed: Vec<Vec<f64>> = (0..c)
            .map(|ch| (0..t).map(|i| gamma[ch] * (alpha * x.data()[(b * c + ch) * t + i]).tanh() + beta[ch]).collect())
            .collect();
        let qkv: Vec<Vec<f64>> = (0..3 * dim)
            .map(|o| (0..t).map(|i| (0..c).map(|ch| qkv_w[o * c + ch] * normed[ch][i]).sum()).collect())
            .collect();
        let mut attended = vec![vec![0.0; t]; dim];
        for q in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|k| (0..dim).map(|d| qkv[d][q] * qkv[dim + d][k]).sum::<f64>() / (dim as f64).sqrt())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for d in 0..dim {
                attended[d][q] = (0..t).map(|k| exps[k] / total * qkv[2 * dim + d][k]).sum();
            }
        }
        for ch in 0..c {
            for i in 0..t {
                out[(b * c + ch) * t + i] = match &proj {
                    Some((pw, pb)) => pb[ch] + (0..dim).map(|d| pw[ch * dim + d] * attended[d][i]).sum::<f64>(),
                    None => attended[ch][i],
                };
            }
        }
    }
    Tensor::new(&[n, c, h, w], out).unwrap()
}

fn attention_cases(r: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for case in 0..200u64 {
        let c = r.gen_range(1..=6);
        let dim = if case % 2 == 0 { c } else { r.gen_range(1..=6) };
        let mut store = ParamStore::<f64>::new();
        let attn = SingleHeadAttention::new(&mut store, &mut rng(case), "attn", c, dim, true).unwrap();
        for name in ["attn.norm.alpha", "attn.norm.weight", "attn.norm.bias"] {
            let id = store.id(name).unwrap();
            let v = random(r, store.value(id).shape(), -1.5, 1.5);
            store.set_value(id, v).unwrap();
        }
        let shape = [r.gen_range(1..=2), c, r.gen_range(1..=4), r.gen_range(1..=4)];
        let x = random(r, &shape, -2.0, 2.0);
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &store, Mode::Eval);
        let xv = ctx.tape.constant(x.clone()).unwrap();
        let y = attn.forward(&mut ctx, xv).unwrap();
        let got = ctx.value(y).clone();
        worst = worst.max(max_diff(&got, &attention_oracle(&store, &x, dim)));
    }
    worst
}

fn sample_oracle(x: &Tensor<f64>, grid: &Tensor<f64>) -> Tensor<f64> {
    let (n, c, h, w) = x.dims4().unwrap();
    let (_, oh, ow, _) = grid.dims4().unwrap();
    let axis = |g: f64, extent: usize| {
        let s = (((g + 1.0) * extent as f64 - 1.0) / 2.0).clamp(0.0, (extent - 1) as f64);
        let lo = (s.floor() as usize).min(extent.saturating_sub(2));
        let hi = (lo + 1).min(extent - 1);
        (lo, hi, s - lo as f64)
    };
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for b in 0..n {
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let g = &grid.data()[((b * oh + i) * ow + j) * 2..][..2];
                    let (x0, x1, fx) = axis(g[0], w);
                    let (y0, y1, fy) = axis(g[1], h);
                    let at = |y: usize, xx: usize| x.data()[((b * c + ch) * h + y) * w + xx];
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                    let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                    out.push(top * (1.0 - fy) + bot * fy);
                }
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out).unwrap()
}

fn sample_cases(r: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = r.gen_range(1..=2);
        let shape = [n, r.gen_range(1..=3), r.gen_range(1..=6), r.gen_range(1..=6)];
        let x = random(r, &shape, -2.0, 2.0);
        // reaches past the border so clamping is exercised
        let grid_shape = [n, r.gen_range(1..=6), r.gen_range(1..=6), 2];
        let grid = random(r, &grid_shape, -1.3, 1.3);
        worst = worst.max(max_diff(&bilinear_sample(&x, &grid).unwrap(), &sample_oracle(&x, &grid)));
    }
    worst
}

fn evaluate_cases(r: &mut ChaCha8Rng) -> (usize, usize) {
    let mut mismatches = 0;
    for _ in 0..1000 {
        let (h, w) = (r.gen_range(1..=12), r.gen_range(1..=12));
        // sparse, dense, empty and full masks all occur
        let (pf, gf) = (r.gen_range(0.0..=1.0f64), r.gen_range(0.0..=1.0f64));
        let target = Tensor::from_fn(&[1, 1, h, w], |_| if r.gen_bool(gf) { 1.0 } else { 0.0 }).unwrap();
        let logits = Tensor::from_fn(&[1, 1, h, w], |_| {
            let mag = r.gen_range(0.01..6.0);
            if r.gen_bool(pf) { mag } else { -mag }
        })
        .unwrap();
        let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
        for (&z, &g) in logits.data().iter().zip(target.data()) {
            match (sigmoid(z) > 0.5, g > 0.5) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        let errors = fp + fn_;
        let score = |num: u64, den: u64| match den {
            0 if errors == 0 => 1.0,
            0 => 0.0,
            _ => num as f64 / den as f64,
        };
        let want = [
            score(2 * tp, 2 * tp + fp + fn_),
            score(tp, tp + fp + fn_),
            score(tp, tp + fp),
            score(tp, tp + fn_),
            score(tn, tn + fp),
            score(tp + tn, tp + fp + fn_ + tn),
        ];
        let got = evaluate(&logits, &target, 0.5).unwrap();
        let c = got.counts;
        if got.scores() != want || (c.tp, c.fp, c.fn_, c.tn) != (tp, fp, fn_, tn) {
            mismatches += 1;
        }
    }
    (mismatches, 1000)
}

fn oracle_equivalence() -> Outcome {
    let mut r = rng(2);
    let errs = [
        ("conv2d", conv_cases(&mut r)),
        ("matmul", matmul_cases(&mut r)),
        ("attention", attention_cases(&mut r)),
        ("bilinear_sample", sample_cases(&mut r)),
    ];
    let (mismatches, masks) = evaluate_cases(&mut r);
    let ok = errs.iter().all(|(_, e)| *e < 1e-6) && mismatches == 0;
    let list: Vec<String> = errs.iter().map(|(k, e)| format!("{k} {e:.1e}")).collect();
    outcome(
        ok,
        format!("200 cases each, max abs diff: {} (< 1e-6); evaluate: {mismatches}/{masks} masks differ", list.join(", ")),
    )
}

// ---- 3 ----

/// 2x bilinear upsampling sampled at the quarter-pixel lattice, written
/// directly in pixel units.
fn quarter_pixel_reference(x: &Tensor<f64>) -> Tensor<f64> {
    let (n, c, h, w) = x.dims4().unwrap();
    Tensor::from_fn(&[n, c, 2 * h, 2 * w], |i| {
        let oj = i % (2 * w);
        let oi = (i / (2 * w)) % (2 * h);
        let plane = i / (4 * h * w);
        let sy = (oi as f64 / 2.0 - 0.25).clamp(0.0, (h - 1) as f64);
        let sx = (oj as f64 / 2.0 - 0.25).clamp(0.0, (w - 1) as f64);
        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
        let at = |y: usize, xx: usize| x.data()[plane * h * w + y * w + xx];
        (at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx) * (1.0 - fy) + (at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx) * fy
    })
    .unwrap()
}

fn static_degradation() -> Outcome {
    let mut r = rng(3);
    let (mut worst_up, mut worst_block): (f64, f64) = (0.0, 0.0);
    for case in 0..50u64 {
        let groups = [1, 2, 4][case as usize % 3];
        let cin = groups * r.gen_range(1..=3);
        let skip = r.gen_range(1..=4);
        let build = |mode| {
            let mut store = ParamStore::<f64>::new();
            let cfg = DyFusionUpConfig { groups, mode, ..DyFusionUpConfig::new(cin, skip) };
            let up = DyFusionUp::new(&mut store, &mut rng(case), "up", cfg).unwrap();
            (store, up)
        };
        let (mut store, up) = build(UpsampleMode::Dynamic);
        let ids: Vec<_> = store.ids().filter(|&id| store.get(id).name.contains("offset")).collect();
        assert_eq!(ids.len(), 2, "offset predictor weight and bias");
        for id in ids {
            let z = Tensor::zeros(store.value(id).shape()).unwrap();
            store.set_value(id, z).unwrap();
        }
        let (h, w) = (r.gen_range(1..=6), r.gen_range(1..=6));
        let n = r.gen_range(1..=2);
        let low = random(&mut r, &[n, cin, h, w], -2.0, 2.0);
        let skip_x = random(&mut r, &[n, skip, 2 * h, 2 * w], -2.0, 2.0);
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &store, Mode::Eval);
        let lv = ctx.tape.constant(low.clone()).unwrap();
        let up_v = up.upsample(&mut ctx, lv).unwrap();
        worst_up = worst_up.max(max_diff(ctx.value(up_v), &quarter_pixel_reference(&low)));

        // whole block against the fixed-bilinear variant with the same weights
        let sv = ctx.tape.constant(skip_x.clone()).unwrap();
        let y_dyn = up.forward(&mut ctx, lv, sv).unwrap();
        let y_dyn = ctx.value(y_dyn).clone();
        let (s_bil, bil) = build(UpsampleMode::Bilinear);
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &s_bil, Mode::Eval);
        let (lv, sv) = (ctx.tape.constant(low).unwrap(), ctx.tape.constant(skip_x).unwrap());
        let y_bil = bil.forward(&mut ctx, lv, sv).unwrap();
        worst_block = worst_block.max(max_diff(&y_dyn, ctx.value(y_bil)));
    }
    outcome(
        worst_up < 1e-6 && worst_block < 1e-6,
        format!("50 cases: upsampler vs quarter-pixel reference {worst_up:.1e}, block vs bilinear variant {worst_block:.1e} (< 1e-6)"),
    )
}

// ---- 4 ----

fn loss_contract() -> Outcome {
    let mut r = rng(4);
    let mut bad = 0;
    for _ in 0..200 {
        let shape = [r.gen_range(1..=3), 1, r.gen_range(1..=8), r.gen_range(1..=8)];
        let logits = random(&mut r, &shape, -6.0, 6.0);
        let target = Tensor::from_fn(&shape, |_| if r.gen_bool(0.4) { 1.0 } else { 0.0 }).unwrap();
        let eps = 1e-6;
        let bce = bce_loss(&logits, &target).unwrap();
        let dice = dice_loss(&logits.map(sigmoid), &target, eps).unwrap();
        let at = |lambda| hybrid_loss(&logits, &target, &LossConfig { lambda, epsilon: eps }).unwrap();
        if at(0.5) != 0.5 * bce + 0.5 * dice || at(1.0) != bce || at(0.0) != dice {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad}/200 cases differ from 0.5*BCE + 0.5*Dice or from the endpoint losses (exact)"))
}

// ---- 5 ----

fn schedule_and_optimizer() -> Outcome {
    let cfg = TrainConfig::default();
    let anchors = [lr_at(5.0, &cfg), lr_at(10.0, &cfg), lr_at(130.0, &cfg)];
    let anchors_ok = anchors == [5e-4, 1e-3, 0.0];

    let values = vec![0.75, -1.5, 3.0, 0.0];
    let run = |wd: f64, steps: usize| {
        let mut store = ParamStore::<f64>::new();
        let id = store.register("w", Tensor::new(&[4], values.clone()).unwrap(), true).unwrap();
        let mut state = AdamState::new(&store);
        let c = TrainConfig { weight_decay: wd, ..TrainConfig::default() };
        for _ in 0..steps {
            adamw_step(&mut store, &mut state, 1e-3, &c).unwrap();
        }
        store.value(id).data().to_vec()
    };
    let identity_ok = run(0.0, 10) == values;
    let decayed: Vec<f64> = values.iter().map(|v| v * (1.0 - 1e-3 * 0.5)).collect();
    let decay_ok = run(0.5, 1) == decayed;
    outcome(
        anchors_ok && identity_ok && decay_ok,
        format!(
            "lr_at(5,10,130) = {anchors:?}; zero-grad identity {}; decay-only update {}",
            if identity_ok { "exact" } else { "differs" },
            if decay_ok { "exact" } else { "differs" }
        ),
    )
}

// ---- 6 ----

/// Recipe for the desk-scale run.
fn desk_config() -> TrainConfig {
    TrainConfig {
        seed: 42,
        max_steps: 200,
        total_epochs: 50,
        warmup_epochs: 5,
        ..TrainConfig::default()
    }
}

fn desk_training() -> Outcome {
    let model = ModelConfig { input_size: 64, ..ModelConfig::tiny() };
    let cfg = desk_config();
    let t = Instant::now();
    let mut all = synth_dataset(80, 42, 64).unwrap();
    let valid = all.split_off(64);
    let data = TrainData { train: SampleSource::Memory(all), valid: SampleSource::Memory(valid) };
    let first = match train(&model, &cfg, &data, None, |_| {}) {
        Ok(o) => o,
        Err(e) => return outcome(false, format!("training failed: {e}")),
    };
    let elapsed = t.elapsed();
    let rerun = train(&model, &TrainConfig { max_steps: 10, ..cfg.clone() }, &data, None, |_| {}).unwrap();
    let bits = |v: &[f64]| v.iter().take(10).map(|x| x.to_bits()).collect::<Vec<_>>();
    let identical = bits(&first.report.step_losses) == bits(&rerun.report.step_losses);
    let r = &first.report;
    let dice = r.final_metrics.dice;
    let ok = r.step_losses.len() == 200 && dice >= 0.90 && elapsed < Duration::from_secs(600) && identical;
    outcome(
        ok,
        format!(
            "{} steps, final valid Dice {dice:.4} (>= 0.90, best {:.4} at epoch {}), {:.0}s (< 600s), first 10 losses {}",
            r.step_losses.len(),
            r.best_dice,
            r.best_epoch,
            elapsed.as_secs_f64(),
            if identical { "bit-identical on rerun" } else { "DIFFER on rerun" }
        ),
    )
}

// ---- 7 ----

fn accounting() -> Outcome {
    let cfg = ModelConfig::default();
    let model = Model::<f32>::build(cfg.clone(), 0).unwrap();
    let n = model.param_count();
    let want = common::expected_count(&cfg);
    let ratio = n as f64 / REFERENCE_PARAMS as f64;
    outcome(
        n == want,
        format!("default config: {n} parameters (shape arithmetic {want}), ratio to {REFERENCE_PARAMS} = {ratio:.4}"),
    )
}

// ---- 8 ----

fn serialization() -> Outcome {
    let mut model = Model::<f32>::build(ModelConfig { sampler_groups: 2, ..ModelConfig::tiny() }, 8).unwrap();
    let ids: Vec<_> = model.params.ids().collect();
    let mut r = rng(8);
    for id in ids {
        for v in model.params.get_mut(id).value.data_mut() {
            *v += r.gen_range(-0.05f32..0.05);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path).unwrap();
    let loaded = Model::<f32>::load(&path).unwrap();
    let tensors_ok = model.params.iter().zip(loaded.params.iter()).all(|(a, b)| {
        a.name == b.name && a.value.data().iter().zip(b.value.data()).all(|(x, y)| x.to_bits() == y.to_bits())
    }) && loaded.cfg == model.cfg;
    let x = Tensor::<f32>::from_fn(&[2, 3, 32, 32], |_| r.gen_range(-2.0..2.0)).unwrap();
    let (ya, yb) = (model.forward(&x).unwrap(), loaded.forward(&x).unwrap());
    let logits_ok = ya.data().iter().zip(yb.data()).all(|(a, b)| a.to_bits() == b.to_bits());

    let bytes = std::fs::read(&path).unwrap();
    let cuts = [0, 1, 7, 16, bytes.len() / 3, bytes.len() / 2, bytes.len() - 4, bytes.len() - 1];
    let rejected = cuts
        .iter()
        .filter(|&&cut| {
            let p = dir.path().join(format!("cut{cut}"));
            std::fs::write(&p, &bytes[..cut]).unwrap();
            matches!(Model::<f32>::load(&p), Err(Error::Format { .. }))
        })
        .count();
    outcome(
        tensors_ok && logits_ok && rejected == cuts.len(),
        format!(
            "tensors {}, logits {}, {rejected}/{} truncations rejected",
            if tensors_ok { "bit-identical" } else { "DIFFER" },
            if logits_ok { "bit-identical" } else { "DIFFER" },
            cuts.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient fidelity", gradient_fidelity),
        ("oracle equivalence", oracle_equivalence),
        ("static-degradation equivalence", static_degradation),
        ("loss contract", loss_contract),
        ("schedule and optimizer", schedule_and_optimizer),
        ("desk-scale training", desk_training),
        ("parameter accounting", accounting),
        ("serialization", serialization),
    ];
    // `cargo test -- --list` probes every target; nothing to enumerate here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        println!(
            "acceptance {} {name}: {} | {} [{:.1}s]",
            i + 1,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        failures += usize::from(!o.passed);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
