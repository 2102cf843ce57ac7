use crate::autodiff::{Ctx, ParamId, ParamStore, Var};
use crate::error::{dim_err, Result};
use crate::tensor::{binary, unary, Binary, Element, Tensor, Unary};

use super::layers::join;

/// Values of a dynamic tanh: scalar `alpha`, per-channel `gamma` and `beta`.
#[derive(Debug, Clone)]
pub struct DyTParams<T: Element> {
    pub alpha: T,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

fn check_channels(x: &[usize], gamma: &[usize], beta: &[usize]) -> Result<()> {
    let c = *x.get(1).ok_or_else(|| dim_err!("dyt input {x:?} has no channel axis"))?;
    if gamma != [c] || beta != [c] {
        return Err(dim_err!(
            "dyt gamma {gamma:?} / beta {beta:?} do not match {c} channels"
        ));
    }
    Ok(())
}

/// `y = gamma_c * tanh(alpha * x) + beta_c`.
pub fn dyt<T: Element>(x: &Tensor<T>, p: &DyTParams<T>) -> Result<Tensor<T>> {
    check_channels(x.shape(), p.gamma.shape(), p.beta.shape())?;
    let t = unary(&x.map(|v| v * p.alpha), Unary::Tanh);
    binary(&binary(&t, &p.gamma, Binary::Mul)?, &p.beta, Binary::Add)
}

/// Learnable DyT layer.
#[derive(Debug, Clone)]
pub struct DyT {
    pub alpha: ParamId,
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl DyT {
    pub const ALPHA_INIT: f64 = 0.5;

    pub fn new<T: Element>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(DyT {
            alpha: store.register(join(name, "alpha"), Tensor::scalar(T::of(Self::ALPHA_INIT)), true)?,
            gamma: store.register(join(name, "weight"), Tensor::ones(&[channels])?, true)?,
            beta: store.register(join(name, "bias"), Tensor::zeros(&[channels])?, true)?,
        })
    }

    pub fn params<T: Element>(&self, store: &ParamStore<T>) -> DyTParams<T> {
        DyTParams {
            alpha: store.value(self.alpha).data()[0],
            gamma: store.value(self.gamma).clone(),
            beta: store.value(self.beta).clone(),
        }
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (alpha, gamma, beta) = (ctx.param(self.alpha)?, ctx.param(self.gamma)?, ctx.param(self.beta)?);
        check_channels(ctx.tape.shape(x), ctx.tape.shape(gamma), ctx.tape.shape(beta))?;
        let ax = ctx.tape.mul(x, alpha)?;
        let t = ctx.tape.tanh(ax)?;
        let g = ctx.tape.mul(t, gamma)?;
        ctx.tape.add(g, beta)
    }
}
