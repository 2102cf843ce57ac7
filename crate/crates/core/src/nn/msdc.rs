use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Ctx, ParamId, ParamStore, Var};
use crate::error::{config_err, Result};
use crate::tensor::{ConvSpec, Element};

use super::layers::{join, uniform, BatchNorm2d};

/// Multi-scale dilated depthwise convolution: `BN(x + sum_r DWConv3x3_r(x))`.
///
/// Branches carry no bias since the shared BN removes any per-channel shift.
#[derive(Debug, Clone)]
pub struct Msdc {
    pub branches: Vec<(ParamId, usize)>,
    pub bn: BatchNorm2d,
    pub channels: usize,
}

impl Msdc {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        dilations: &[usize],
    ) -> Result<Self> {
        if dilations.is_empty() || dilations.contains(&0) {
            return Err(config_err!("dilation rates must be non-empty and positive, got {dilations:?}"));
        }
        let bound = 1.0 / 3.0;
        let mut branches = Vec::with_capacity(dilations.len());
        for &r in dilations {
            let w = uniform(rng, &[channels, 1, 3, 3], bound)?;
            branches.push((store.register(join(name, &format!("dw{r}.weight")), w, true)?, r));
        }
        let bn = BatchNorm2d::new(store, &join(name, "bn"), channels)?;
        Ok(Msdc { branches, bn, channels })
    }

    /// The residual sum before normalization.
    pub fn pre_norm<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let mut acc = x;
        for &(w, r) in &self.branches {
            let w = ctx.param(w)?;
            let y = ctx.tape.conv2d(x, w, None, ConvSpec::depthwise3x3(self.channels, r))?;
            acc = ctx.tape.add(acc, y)?;
        }
        Ok(acc)
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let sum = self.pre_norm(ctx, x)?;
        self.bn.forward(ctx, sum)
    }
}
