use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Ctx, ParamStore, Var};
use crate::error::{config_err, dim_err, Error, Result};
use crate::tensor::{ConvSpec, Element, Tensor};

use super::layers::{join, Conv2d, Init};
use super::msdc::Msdc;

/// Sub-pixel lattice for 2x upsampling: `[g, 4, 2]` holding `(x, y)` offsets
/// in input-pixel units, sub-pixel `k = dy * 2 + dx`.
pub fn init_offsets<T: Element>(groups: usize, scale: usize) -> Result<Tensor<T>> {
    if scale != 2 {
        return Err(Error::UnsupportedScale(scale));
    }
    if groups == 0 {
        return Err(config_err!("groups must be >= 1"));
    }
    Tensor::from_fn(&[groups, 4, 2], |i| {
        let (k, axis) = ((i / 2) % 4, i % 2);
        let bit = if axis == 0 { k % 2 } else { k / 2 };
        T::of(if bit == 0 { -0.25 } else { 0.25 })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsampleMode {
    /// Learned per-group offsets around the sub-pixel lattice.
    Dynamic,
    /// Fixed quarter-pixel bilinear sampling.
    Bilinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyFusionUpConfig {
    pub in_channels: usize,
    pub skip_channels: usize,
    pub groups: usize,
    pub scale: usize,
    pub offset_range: f64,
    pub fuse_dilations: Vec<usize>,
    pub mode: UpsampleMode,
}

impl DyFusionUpConfig {
    pub fn new(in_channels: usize, skip_channels: usize) -> Self {
        DyFusionUpConfig {
            in_channels,
            skip_channels,
            groups: 4,
            scale: 2,
            offset_range: 0.25,
            fuse_dilations: vec![1, 2, 3],
            mode: UpsampleMode::Dynamic,
        }
    }

    pub fn offset_channels(&self) -> usize {
        2 * self.groups * self.scale * self.scale
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale != 2 {
            return Err(Error::UnsupportedScale(self.scale));
        }
        if self.groups == 0 || self.in_channels % self.groups != 0 {
            return Err(config_err!(
                "{} input channels are not divisible into {} groups",
                self.in_channels,
                self.groups
            ));
        }
        if self.skip_channels == 0 {
            return Err(config_err!("skip channels must be >= 1"));
        }
        if !self.offset_range.is_finite() {
            return Err(config_err!("offset range must be finite"));
        }
        Ok(())
    }
}

/// Dynamic 2x upsampler followed by skip fusion.
#[derive(Debug, Clone)]
pub struct DyFusionUp {
    pub cfg: DyFusionUpConfig,
    pub offset: Option<Conv2d>,
    pub align: Conv2d,
    pub fuse_local: Msdc,
    pub fuse_out: Conv2d,
}

impl DyFusionUp {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: DyFusionUpConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let (cin, c) = (cfg.in_channels, cfg.skip_channels);
        let one = ConvSpec::default();
        let offset = match cfg.mode {
            UpsampleMode::Dynamic => Some(Conv2d::new(
                store,
                rng,
                &join(name, "offset"),
                cin,
                cfg.offset_channels(),
                1,
                one,
                true,
                Init::Zeros,
            )?),
            UpsampleMode::Bilinear => None,
        };
        let align = Conv2d::new(store, rng, &join(name, "align"), cin, c, 1, one, true, Init::FanIn)?;
        let fuse_local = Msdc::new(store, rng, &join(name, "fuse"), 2 * c, &cfg.fuse_dilations)?;
        let fuse_out = Conv2d::new(
            store,
            rng,
            &join(name, "out"),
            2 * c,
            c,
            3,
            ConvSpec::new(1, 1, 1, 1),
            true,
            Init::FanIn,
        )?;
        Ok(DyFusionUp { cfg, offset, align, fuse_local, fuse_out })
    }

    /// Normalized sampling positions of the fixed lattice, `[n, 2g, 2h, 2w]`
    /// with channel `grp * 2 + {0: x, 1: y}`.
    fn base_grid<T: Element>(&self, n: usize, h: usize, w: usize) -> Result<Tensor<T>> {
        let g = self.cfg.groups;
        let p = init_offsets::<f64>(g, 2)?;
        let (oh, ow) = (2 * h, 2 * w);
        Tensor::from_fn(&[n, 2 * g, oh, ow], |i| {
            let col = i % ow;
            let row = (i / ow) % oh;
            let ch = (i / (ow * oh)) % (2 * g);
            let (grp, axis) = (ch / 2, ch % 2);
            let k = (row % 2) * 2 + col % 2;
            let off = p.data()[(grp * 4 + k) * 2 + axis];
            let (base, extent) = if axis == 0 { (col / 2, w) } else { (row / 2, h) };
            T::of(2.0 * (base as f64 + off + 0.5) / extent as f64 - 1.0)
        })
    }

    /// Sampling grid `[n * g, 2h, 2w, 2]` for `x_low`.
    pub fn sampling_grid<T: Element>(&self, ctx: &mut Ctx<'_, T>, x_low: Var) -> Result<Var> {
        let (n, _, h, w) = ctx.value(x_low).dims4()?;
        let g = self.cfg.groups;
        let base = ctx.tape.constant(self.base_grid(n, h, w)?)?;
        let grid = match &self.offset {
            Some(conv) => {
                let raw = conv.forward(ctx, x_low)?;
                let field = ctx.tape.pixel_shuffle(raw, 2)?;
                let field = ctx.tape.scale(field, T::of(self.cfg.offset_range))?;
                // pixel units -> normalized units, per axis
                let to_norm = Tensor::from_fn(&[2 * g], |ch| {
                    T::of(2.0 / if ch % 2 == 0 { w } else { h } as f64)
                })?;
                let to_norm = ctx.tape.constant(to_norm)?;
                let field = ctx.tape.mul(field, to_norm)?;
                ctx.tape.add(base, field)?
            }
            None => base,
        };
        let grid = ctx.tape.reshape(grid, &[n * g, 2, 2 * h, 2 * w])?;
        ctx.tape.permute(grid, &[0, 2, 3, 1])
    }

    /// Group-wise resampling of `x_low` to twice its resolution.
    pub fn upsample<T: Element>(&self, ctx: &mut Ctx<'_, T>, x_low: Var) -> Result<Var> {
        let (n, c, h, w) = ctx.value(x_low).dims4()?;
        if c != self.cfg.in_channels {
            return Err(dim_err!("expected {} input channels, got {c}", self.cfg.in_channels));
        }
        let g = self.cfg.groups;
        let grid = self.sampling_grid(ctx, x_low)?;
        let grouped = ctx.tape.reshape(x_low, &[n * g, c / g, h, w])?;
        let up = ctx.tape.bilinear_sample(grouped, grid)?;
        ctx.tape.reshape(up, &[n, c, 2 * h, 2 * w])
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x_low: Var, x_skip: Var) -> Result<Var> {
        let (n, _, h, w) = ctx.value(x_low).dims4()?;
        let (sn, sc, sh, sw) = ctx.value(x_skip).dims4()?;
        if sn != n || sh != 2 * h || sw != 2 * w {
            return Err(dim_err!(
                "skip {:?} is not twice the spatial size of {:?}",
                ctx.value(x_skip).shape(),
                ctx.value(x_low).shape()
            ));
        }
        if sc != self.cfg.skip_channels {
            return Err(dim_err!("expected {} skip channels, got {sc}", self.cfg.skip_channels));
        }
        let up = self.upsample(ctx, x_low)?;
        let aligned = self.align.forward(ctx, up)?;
        let cat = ctx.tape.concat(&[x_skip, aligned], 1)?;
        let fused = self.fuse_local.forward(ctx, cat)?;
        self.fuse_out.forward(ctx, fused)
    }
}
