use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Ctx, ParamStore, Var};
use crate::error::{config_err, Result};
use crate::tensor::{ConvSpec, Element};

use super::attention::SingleHeadAttention;
use super::ffn::{hidden_channels, Ffn};
use super::layers::{join, Conv2d, Init};
use super::msdc::Msdc;

#[derive(Debug, Clone, PartialEq)]
pub struct ShdcConfig {
    pub channels: usize,
    /// Fraction of channels routed to the attention path.
    pub split_ratio: f64,
    pub dilation_rates: Vec<usize>,
    /// Attention width; defaults to the global split width.
    pub attn_dim: Option<usize>,
    pub ffn_ratio: f64,
    /// Whether the split attention/dilated-conv stage runs at all.
    pub use_fusion: bool,
    /// DyT before attention; batch norm when off.
    pub use_dyt: bool,
}

impl ShdcConfig {
    pub fn new(channels: usize) -> Self {
        ShdcConfig {
            channels,
            split_ratio: 0.5,
            dilation_rates: vec![1, 2, 3],
            attn_dim: None,
            ffn_ratio: 4.0,
            use_fusion: true,
            use_dyt: true,
        }
    }

    /// `(C_g, C - C_g)`.
    pub fn split_sizes(&self) -> Result<(usize, usize)> {
        let c = self.channels;
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(config_err!("split ratio must lie in (0, 1), got {}", self.split_ratio));
        }
        let cg = (self.split_ratio * c as f64).round() as usize;
        if cg == 0 || cg >= c {
            return Err(config_err!(
                "split ratio {} leaves an empty path for {c} channels",
                self.split_ratio
            ));
        }
        Ok((cg, c - cg))
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(config_err!("block needs at least one channel"));
        }
        hidden_channels(self.channels, self.ffn_ratio)?;
        if self.use_fusion {
            self.split_sizes()?;
            if self.dilation_rates.is_empty() || self.dilation_rates.contains(&0) {
                return Err(config_err!(
                    "dilation rates must be non-empty and positive, got {:?}",
                    self.dilation_rates
                ));
            }
            if self.attn_dim == Some(0) {
                return Err(config_err!("attention dim must be >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Fusion {
    pub attn: SingleHeadAttention,
    pub local: Msdc,
    pub merge: Conv2d,
    pub split: (usize, usize),
}

/// Depthwise conv, optional global/local fusion, FFN; each stage residual.
#[derive(Debug, Clone)]
pub struct ShdcBlock {
    pub cfg: ShdcConfig,
    pub dw: Conv2d,
    pub fusion: Option<Fusion>,
    pub ffn: Ffn,
}

impl ShdcBlock {
    pub fn new<T: Element>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, cfg: ShdcConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        let dw = Conv2d::new(store, rng, &join(name, "dw"), c, c, 3, ConvSpec::depthwise3x3(c, 1), true, Init::FanIn)?;
        let fusion = if cfg.use_fusion {
            let (cg, cl) = cfg.split_sizes()?;
            let d = cfg.attn_dim.unwrap_or(cg);
            Some(Fusion {
                attn: SingleHeadAttention::new(store, rng, &join(name, "attn"), cg, d, cfg.use_dyt)?,
                local: Msdc::new(store, rng, &join(name, "msdc"), cl, &cfg.dilation_rates)?,
                merge: Conv2d::new(store, rng, &join(name, "merge"), c, c, 1, ConvSpec::default(), true, Init::FanIn)?,
                split: (cg, cl),
            })
        } else {
            None
        };
        let ffn = Ffn::new(store, rng, &join(name, "ffn"), c, cfg.ffn_ratio)?;
        Ok(ShdcBlock { cfg, dw, fusion, ffn })
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let y = self.dw.forward(ctx, x)?;
        let mut x = ctx.tape.add(x, y)?;
        if let Some(f) = &self.fusion {
            let parts = ctx.tape.split(x, 1, &[f.split.0, f.split.1])?;
            let g = f.attn.forward(ctx, parts[0])?;
            let l = f.local.forward(ctx, parts[1])?;
            let cat = ctx.tape.concat(&[g, l], 1)?;
            let merged = f.merge.forward(ctx, cat)?;
            x = ctx.tape.add(x, merged)?;
        }
        self.ffn.forward(ctx, x)
    }
}
