use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Ctx, ParamId, ParamStore, Var};
use crate::error::Result;
use crate::tensor::{ConvSpec, Element, Tensor};

/// Batch-norm defaults.
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

pub(crate) fn join(prefix: &str, leaf: &str) -> String {
    if prefix.is_empty() {
        leaf.to_string()
    } else {
        format!("{prefix}.{leaf}")
    }
}

pub(crate) fn uniform<T: Element>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Result<Tensor<T>> {
    Tensor::from_fn(shape, |_| T::of(rng.gen_range(-bound..=bound)))
}

/// How a convolution's parameters start out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weight and bias.
    FanIn,
    Zeros,
}

/// 2-D convolution layer.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: ConvSpec,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        spec: ConvSpec,
        bias: bool,
        init: Init,
    ) -> Result<Self> {
        let cin_g = in_channels / spec.groups.max(1);
        let shape = [out_channels, cin_g.max(1), kernel, kernel];
        let fan_in = (cin_g * kernel * kernel).max(1);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let make = |rng: &mut ChaCha8Rng, shape: &[usize]| match init {
            Init::FanIn => uniform(rng, shape, bound),
            Init::Zeros => Tensor::zeros(shape),
        };
        let weight = store.register(join(name, "weight"), make(rng, &shape)?, true)?;
        let bias = if bias {
            Some(store.register(join(name, "bias"), make(rng, &[out_channels])?, true)?)
        } else {
            None
        };
        Ok(Conv2d { weight, bias, spec })
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight)?;
        let b = self.bias.map(|b| ctx.param(b)).transpose()?;
        ctx.tape.conv2d(x, w, b, self.spec)
    }
}

/// Batch normalization with learnable affine parameters and running
/// statistics stored as non-trainable buffers.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm2d {
    pub fn new<T: Element>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm2d {
            gamma: store.register(join(name, "weight"), Tensor::ones(&[channels])?, true)?,
            beta: store.register(join(name, "bias"), Tensor::zeros(&[channels])?, true)?,
            running_mean: store.register(join(name, "running_mean"), Tensor::zeros(&[channels])?, false)?,
            running_var: store.register(join(name, "running_var"), Tensor::ones(&[channels])?, false)?,
        })
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let gamma = ctx.param(self.gamma)?;
        let beta = ctx.param(self.beta)?;
        let params = ctx.params;
        let (y, running) = ctx.tape.batchnorm2d(
            x,
            gamma,
            beta,
            params.value(self.running_mean),
            params.value(self.running_var),
            ctx.mode,
            BN_MOMENTUM,
            BN_EPS,
        )?;
        if let Some((mean, var)) = running {
            ctx.defer_update(self.running_mean, mean);
            ctx.defer_update(self.running_var, var);
        }
        Ok(y)
    }
}
