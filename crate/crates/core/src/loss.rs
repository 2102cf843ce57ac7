//! Hybrid Dice + BCE training loss.

use crate::autodiff::{Tape, Var};
use crate::error::{config_err, dim_err, Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the BCE term; Dice gets `1 - lambda`.
    pub lambda: f64,
    /// Dice smoothing term.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.5,
            epsilon: 1e-6,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(config_err!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(config_err!("epsilon must be > 0, got {}", self.epsilon));
        }
        Ok(())
    }
}

fn check_target<T: Element>(target: &Tensor<T>) -> Result<()> {
    if let Some(v) = target.data().iter().find(|v| **v != T::zero() && **v != T::one()) {
        return Err(Error::Contract(format!("target must be binary, found {v}")));
    }
    Ok(())
}

fn check_same_shape(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(dim_err!("prediction {a:?} vs target {b:?}"));
    }
    Ok(())
}

/// Records the soft Dice loss of probabilities against a binary target,
/// summed over the whole batch.
pub fn dice_loss_var<T: Element>(tape: &mut Tape<T>, probs: Var, target: &Tensor<T>, eps: f64) -> Result<Var> {
    check_same_shape(tape.shape(probs), target.shape())?;
    check_target(target)?;
    if !(eps > 0.0) {
        return Err(config_err!("epsilon must be > 0, got {eps}"));
    }
    let tol = 1e-6;
    if let Some(p) = tape
        .value(probs)
        .data()
        .iter()
        .find(|p| p.as_f64() < -tol || p.as_f64() > 1.0 + tol)
    {
        return Err(Error::Contract(format!("probabilities must lie in [0, 1], found {p}")));
    }
    tape.dice_loss(probs, target, T::of(eps))
}

/// Records mean binary cross-entropy on logits.
pub fn bce_loss_var<T: Element>(tape: &mut Tape<T>, logits: Var, target: &Tensor<T>) -> Result<Var> {
    check_same_shape(tape.shape(logits), target.shape())?;
    check_target(target)?;
    tape.bce_with_logits(logits, target)
}

/// Records `lambda * BCE(logits) + (1 - lambda) * Dice(sigmoid(logits))`.
pub fn hybrid_loss_var<T: Element>(
    tape: &mut Tape<T>,
    logits: Var,
    target: &Tensor<T>,
    cfg: &LossConfig,
) -> Result<Var> {
    cfg.validate()?;
    let bce = bce_loss_var(tape, logits, target)?;
    let probs = tape.sigmoid(logits)?;
    let dice = dice_loss_var(tape, probs, target, cfg.epsilon)?;
    let a = tape.scale(bce, T::of(cfg.lambda))?;
    let b = tape.scale(dice, T::of(1.0 - cfg.lambda))?;
    tape.add(a, b)
}

fn on_fresh_tape<T: Element>(
    x: &Tensor<T>,
    f: impl FnOnce(&mut Tape<T>, Var) -> Result<Var>,
) -> Result<T> {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone())?;
    let out = f(&mut tape, v)?;
    tape.value(out).item()
}

pub fn dice_loss<T: Element>(probs: &Tensor<T>, target: &Tensor<T>, eps: f64) -> Result<T> {
    on_fresh_tape(probs, |t, p| dice_loss_var(t, p, target, eps))
}

pub fn bce_loss<T: Element>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    on_fresh_tape(logits, |t, z| bce_loss_var(t, z, target))
}

pub fn hybrid_loss<T: Element>(logits: &Tensor<T>, target: &Tensor<T>, cfg: &LossConfig) -> Result<T> {
    on_fresh_tape(logits, |t, z| hybrid_loss_var(t, z, target, cfg))
}
