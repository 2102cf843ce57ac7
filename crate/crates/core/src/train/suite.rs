//! Finite-difference gradient checks for every differentiable building
//! block, the losses, and the whole network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, Ctx, GradCheckConfig, GradCheckReport, ParamId, ParamStore, Var};
use crate::error::{config_err, Result};
use crate::loss::{bce_loss_var, dice_loss_var, hybrid_loss_var, LossConfig};
use crate::network::{Model, ModelConfig};
use crate::nn::{DyFusionUp, DyFusionUpConfig, DyT, Ffn, Msdc, ShdcBlock, ShdcConfig, SingleHeadAttention};
use crate::tensor::{Mode, Tensor};

/// Names accepted by [`check_block`], in suite order.
pub const GRADCHECK_BLOCKS: [&str; 10] = [
    "dyt",
    "single_head_attention",
    "msdc",
    "ffn",
    "shdc_block",
    "dyfusionup",
    "dice_loss",
    "bce_loss",
    "hybrid_loss",
    "network",
];

/// Aggregate over seeds for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub block: &'static str,
    pub seeds: usize,
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
    pub passed: bool,
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi)).expect("valid shape")
}

fn binary_target(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).expect("valid shape")
}

/// Perturbs every trainable value so no parameter sits at its
/// initialization (zero offsets, unit scales).
fn jitter(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng, amount: f64) {
    for p in store.iter_mut().filter(|p| p.trainable) {
        for v in p.value.data_mut() {
            *v += rng.gen_range(-amount..amount);
        }
    }
}

/// Checks `sum(block(x) * r)` for fixed random `r` over every trainable
/// parameter and the input.
fn check_layer<F>(mut store: ParamStore<f64>, x: Tensor<f64>, rng: &mut ChaCha8Rng, per_param: Option<usize>, seed: u64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Ctx<'_, f64>, Var) -> Result<Var>,
{
    let xid = store.register("input", x, true)?;
    let ids: Vec<ParamId> = store.trainable_ids().collect();
    let cfg = GradCheckConfig {
        max_entries_per_param: per_param,
        seed,
        ..GradCheckConfig::default()
    };
    let mut weights: Option<Tensor<f64>> = None;
    grad_check(&mut store, &ids, &cfg, |tape, s| {
        let mut ctx = Ctx::new(tape, s, Mode::Train);
        let xv = ctx.param(xid)?;
        let y = f(&mut ctx, xv)?;
        let shape = ctx.value(y).shape().to_vec();
        let r = weights.get_or_insert_with(|| random(rng, &shape, -1.0, 1.0)).clone();
        let rv = ctx.tape.constant(r)?;
        let prod = ctx.tape.mul(y, rv)?;
        ctx.tape.sum(prod)
    })
}

/// Checks a scalar loss of one input tensor.
fn check_loss<F>(x: Tensor<f64>, seed: u64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Ctx<'_, f64>, Var) -> Result<Var>,
{
    let mut store = ParamStore::new();
    let xid = store.register("input", x, true)?;
    let cfg = GradCheckConfig {
        seed,
        ..GradCheckConfig::default()
    };
    grad_check(&mut store, &[xid], &cfg, |tape, s| {
        let mut ctx = Ctx::new(tape, s, Mode::Train);
        let xv = ctx.param(xid)?;
        f(&mut ctx, xv)
    })
}

/// Runs the check for one named block with one seed.
pub fn check_block(name: &str, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f64>::new();
    match name {
        "dyt" => {
            let l = DyT::new(&mut store, "dyt", 3)?;
            jitter(&mut store, &mut rng, 0.3);
            let x = random(&mut rng, &[2, 3, 3, 3], -2.0, 2.0);
            check_layer(store, x, &mut rng, None, seed, |c, v| l.forward(c, v))
        }
        "single_head_attention" => {
            let l = SingleHeadAttention::new(&mut store, &mut rng, "attn", 4, 3, true)?;
            jitter(&mut store, &mut rng, 0.2);
            let x = random(&mut rng, &[2, 4, 2, 3], -1.0, 1.0);
            check_layer(store, x, &mut rng, None, seed, |c, v| l.forward(c, v))
        }
        "msdc" => {
            let l = Msdc::new(&mut store, &mut rng, "msdc", 3, &[1, 2, 3])?;
            jitter(&mut store, &mut rng, 0.2);
            let x = random(&mut rng, &[2, 3, 5, 4], -1.0, 1.0);
            check_layer(store, x, &mut rng, None, seed, |c, v| l.forward(c, v))
        }
        "ffn" => {
            let l = Ffn::new(&mut store, &mut rng, "ffn", 3, 2.0)?;
            let x = random(&mut rng, &[2, 3, 3, 3], -1.0, 1.0);
            check_layer(store, x, &mut rng, None, seed, |c, v| l.forward(c, v))
        }
        "shdc_block" => {
            let cfg = ShdcConfig {
                ffn_ratio: 2.0,
                ..ShdcConfig::new(4)
            };
            let l = ShdcBlock::new(&mut store, &mut rng, "shdc", cfg)?;
            jitter(&mut store, &mut rng, 0.1);
            let x = random(&mut rng, &[2, 4, 3, 3], -1.0, 1.0);
            check_layer(store, x, &mut rng, None, seed, |c, v| l.forward(c, v))
        }
        "dyfusionup" => {
            let cfg = DyFusionUpConfig {
                groups: 2,
                ..DyFusionUpConfig::new(4, 2)
            };
            let l = DyFusionUp::new(&mut store, &mut rng, "up", cfg)?;
            // moves the offset predictor off zero so coordinates carry gradient
            jitter(&mut store, &mut rng, 0.5);
            let x = random(&mut rng, &[2, 4, 3, 2], -1.0, 1.0);
            let skip = random(&mut rng, &[2, 2, 6, 4], -1.0, 1.0);
            check_layer(store, x, &mut rng, None, seed, |c, v| {
                let s = c.tape.constant(skip.clone())?;
                l.forward(c, v, s)
            })
        }
        "dice_loss" => {
            let p = random(&mut rng, &[2, 1, 3, 3], 0.05, 0.95);
            let t = binary_target(&mut rng, &[2, 1, 3, 3]);
            check_loss(p, seed, |c, v| dice_loss_var(c.tape, v, &t, 1e-6))
        }
        "bce_loss" => {
            let z = random(&mut rng, &[2, 1, 3, 3], -4.0, 4.0);
            let t = binary_target(&mut rng, &[2, 1, 3, 3]);
            check_loss(z, seed, |c, v| bce_loss_var(c.tape, v, &t))
        }
        "hybrid_loss" => {
            let z = random(&mut rng, &[2, 1, 3, 3], -4.0, 4.0);
            let t = binary_target(&mut rng, &[2, 1, 3, 3]);
            let cfg = LossConfig::default();
            check_loss(z, seed, |c, v| hybrid_loss_var(c.tape, v, &t, &cfg))
        }
        "network" => check_network(seed),
        other => Err(config_err!("unknown block {other:?}; expected one of {}", GRADCHECK_BLOCKS.join(", "))),
    }
}

/// The tiny network on a 2x3x32x32 batch in training mode, sampling two
/// entries of every parameter tensor.
///
/// The objective is `sum(logits * r)` rather than a mean-reduced loss: a
/// mean keeps an O(1) value while per-weight gradients shrink with the pixel
/// count, which pushes many entries under the finite-difference rounding
/// floor (about one ulp of the loss over 2 eps). Loss gradients are checked
/// on their own above.
fn check_network(seed: u64) -> Result<GradCheckReport> {
    let cfg = ModelConfig {
        input_size: 32,
        ..ModelConfig::tiny()
    };
    let mut model = Model::<f64>::build(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    jitter(&mut model.params, &mut rng, 0.25);
    let x = random(&mut rng, &[2, 3, 32, 32], -1.0, 1.0);
    let r = random(&mut rng, &[2, 1, 32, 32], -1.0, 1.0);
    let ids: Vec<ParamId> = model.params.trainable_ids().collect();
    let gc = GradCheckConfig {
        max_entries_per_param: Some(2),
        seed,
        ..GradCheckConfig::default()
    };
    let net = model.net.clone();
    grad_check(&mut model.params, &ids, &gc, |tape, s| {
        let mut ctx = Ctx::new(tape, s, Mode::Train);
        let xv = ctx.tape.constant(x.clone())?;
        let logits = net.forward(&mut ctx, xv)?.logits;
        let rv = ctx.tape.constant(r.clone())?;
        let prod = ctx.tape.mul(logits, rv)?;
        ctx.tape.sum(prod)
    })
}

/// Runs `seeds` seeds of one block, or of every block when `block` is `None`.
pub fn run_suite(block: Option<&str>, seeds: usize) -> Result<Vec<SuiteRow>> {
    let names: Vec<&'static str> = match block {
        None => GRADCHECK_BLOCKS.to_vec(),
        Some(b) => vec![*GRADCHECK_BLOCKS
            .iter()
            .find(|n| **n == b)
            .ok_or_else(|| config_err!("unknown block {b:?}; expected one of {}", GRADCHECK_BLOCKS.join(", ")))?],
    };
    let mut rows = Vec::new();
    for name in names {
        let mut row = SuiteRow {
            block: name,
            seeds,
            max_rel_err: 0.0,
            checked: 0,
            skipped: 0,
            passed: seeds > 0,
        };
        for seed in 0..seeds as u64 {
            let r = check_block(name, seed)?;
            row.max_rel_err = row.max_rel_err.max(r.max_rel_err);
            row.checked += r.checked;
            row.skipped += r.skipped;
            row.passed &= r.passed();
        }
        rows.push(row);
    }
    Ok(rows)
}
