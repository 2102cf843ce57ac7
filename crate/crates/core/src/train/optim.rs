use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

use super::config::TrainConfig;

/// Learning rate at a (possibly fractional) epoch: linear warmup from 0 to
/// `lr0`, then polynomial decay to 0 at `total_epochs`.
pub fn lr_at(epoch: f64, cfg: &TrainConfig) -> f64 {
    let warm = cfg.warmup_epochs as f64;
    let total = cfg.total_epochs as f64;
    let e = epoch.clamp(0.0, total);
    if e < warm {
        cfg.lr0 * (e / warm)
    } else {
        cfg.lr0 * (1.0 - (e - warm) / (total - warm)).powf(cfg.poly_power)
    }
}

/// Rate used throughout 0-based epoch `epoch`. Warmup epochs take the value
/// at their end so the first epoch does not run at rate 0.
pub fn epoch_lr(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch < cfg.warmup_epochs {
        lr_at((epoch + 1) as f64, cfg)
    } else {
        lr_at(epoch as f64, cfg)
    }
}

fn first_non_finite<T: Element>(store: &ParamStore<T>) -> Option<String> {
    store
        .iter()
        .filter(|p| p.trainable)
        .find(|p| p.grad.validate().is_err())
        .map(|p| p.name.clone())
}

/// Scales every trainable gradient so their global L2 norm is at most
/// `max_norm`; returns the factor applied.
pub fn clip_grad_norm<T: Element>(store: &mut ParamStore<T>, max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::Config(format!("max_norm must be > 0, got {max_norm}")));
    }
    let norm = store.iter().filter(|p| p.trainable).map(|p| p.grad.sq_norm()).sum::<f64>().sqrt();
    if !norm.is_finite() {
        let name = first_non_finite(store).unwrap_or_else(|| "<overflow>".into());
        return Err(Error::Numeric(format!("gradient norm is {norm} (first bad parameter: {name})")));
    }
    if norm <= max_norm {
        return Ok(1.0);
    }
    let scale = max_norm / norm;
    let s = T::of(scale);
    for p in store.iter_mut().filter(|p| p.trainable) {
        for g in p.grad.data_mut() {
            *g *= s;
        }
    }
    Ok(scale)
}

/// First and second moments of every trainable parameter.
#[derive(Debug, Clone)]
pub struct AdamState<T: Element> {
    pub step: u64,
    /// Indexed like the store; `None` for buffers.
    pub moments: Vec<Option<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Element> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let moments = store
            .iter()
            .map(|p| p.trainable.then(|| (p.value.zeros_like(), p.value.zeros_like())))
            .collect();
        AdamState { step: 0, moments }
    }
}

/// One AdamW update with decoupled weight decay:
/// `θ ← θ(1 - lr·wd) - lr·m̂/(√v̂ + eps)`.
///
/// Every gradient is checked before anything is written, so a failed step
/// leaves parameters and moments untouched.
pub fn adamw_step<T: Element>(store: &mut ParamStore<T>, state: &mut AdamState<T>, lr: f64, cfg: &TrainConfig) -> Result<()> {
    if state.moments.len() != store.len() {
        return Err(Error::State(format!(
            "optimizer tracks {} parameters, store has {}",
            state.moments.len(),
            store.len()
        )));
    }
    if let Some(name) = first_non_finite(store) {
        return Err(Error::Numeric(format!("non-finite gradient in {name}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = cfg.betas;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let decay = 1.0 - lr * cfg.weight_decay;
    for (p, slot) in store.iter_mut().zip(&mut state.moments) {
        let Some((m, v)) = slot else { continue };
        let grads = p.grad.data();
        let theta = p.value.data_mut();
        for (i, ((m, v), th)) in m.data_mut().iter_mut().zip(v.data_mut()).zip(theta).enumerate() {
            let g = grads[i].as_f64();
            let mi = b1 * m.as_f64() + (1.0 - b1) * g;
            let vi = b2 * v.as_f64() + (1.0 - b2) * g * g;
            *m = T::of(mi);
            *v = T::of(vi);
            let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + cfg.adam_eps);
            *th = T::of(th.as_f64() * decay - update);
        }
    }
    Ok(())
}
