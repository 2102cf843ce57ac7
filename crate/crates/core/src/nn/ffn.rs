use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Ctx, ParamStore, Var};
use crate::error::{config_err, Result};
use crate::tensor::{ConvSpec, Element};

use super::layers::{join, Conv2d, Init};

/// `x + W2 relu(W1 x)` with 1x1 convolutions.
#[derive(Debug, Clone)]
pub struct Ffn {
    pub expand: Conv2d,
    pub project: Conv2d,
}

/// Hidden width for a given expansion ratio, at least one channel.
pub fn hidden_channels(channels: usize, ratio: f64) -> Result<usize> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(config_err!("ffn ratio must be positive, got {ratio}"));
    }
    Ok(((channels as f64 * ratio).round() as usize).max(1))
}

impl Ffn {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        ratio: f64,
    ) -> Result<Self> {
        let hidden = hidden_channels(channels, ratio)?;
        let spec = ConvSpec::default();
        Ok(Ffn {
            expand: Conv2d::new(store, rng, &join(name, "fc1"), channels, hidden, 1, spec, true, Init::FanIn)?,
            project: Conv2d::new(store, rng, &join(name, "fc2"), hidden, channels, 1, spec, true, Init::FanIn)?,
        })
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.expand.forward(ctx, x)?;
        let h = ctx.tape.relu(h)?;
        let y = self.project.forward(ctx, h)?;
        ctx.tape.add(x, y)
    }
}
