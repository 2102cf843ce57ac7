use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Ctx, ParamStore, Var};
use crate::error::{config_err, Result};
use crate::tensor::{ConvSpec, Element};

use super::dyt::DyT;
use super::layers::{join, BatchNorm2d, Conv2d, Init};

/// Pre-attention normalization of the global path.
#[derive(Debug, Clone)]
pub enum TokenNorm {
    DyT(DyT),
    BatchNorm(BatchNorm2d),
}

impl TokenNorm {
    fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        match self {
            TokenNorm::DyT(n) => n.forward(ctx, x),
            TokenNorm::BatchNorm(n) => n.forward(ctx, x),
        }
    }
}

/// Single-head self-attention over the spatial positions of a feature map.
///
/// Q, K and V come from one shared 1x1 conv applied after the
/// normalization; scores are `Q K^T / sqrt(d)` with softmax over keys.
#[derive(Debug, Clone)]
pub struct SingleHeadAttention {
    pub norm: TokenNorm,
    pub qkv: Conv2d,
    /// Present only when `d` differs from the input width.
    pub out: Option<Conv2d>,
    pub dim: usize,
}

/// Intermediate values of one attention pass.
#[derive(Debug, Clone, Copy)]
pub struct AttentionTrace {
    pub output: Var,
    /// `[N, T, T]`, rows indexed by query.
    pub weights: Var,
    /// `[N, 3d, H, W]` projection before the split.
    pub qkv: Var,
}

impl SingleHeadAttention {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        dim: usize,
        use_dyt: bool,
    ) -> Result<Self> {
        if dim < 1 {
            return Err(config_err!("attention dim must be >= 1"));
        }
        let norm_name = join(name, "norm");
        let norm = if use_dyt {
            TokenNorm::DyT(DyT::new(store, &norm_name, channels)?)
        } else {
            TokenNorm::BatchNorm(BatchNorm2d::new(store, &norm_name, channels)?)
        };
        // no bias: a key bias shifts each score row uniformly and cancels in softmax
        let qkv = Conv2d::new(store, rng, &join(name, "qkv"), channels, 3 * dim, 1, ConvSpec::default(), false, Init::FanIn)?;
        let out = if dim != channels {
            Some(Conv2d::new(store, rng, &join(name, "proj"), dim, channels, 1, ConvSpec::default(), true, Init::FanIn)?)
        } else {
            None
        };
        Ok(SingleHeadAttention { norm, qkv, out, dim })
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        Ok(self.trace(ctx, x)?.output)
    }

    pub fn trace<T: Element>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<AttentionTrace> {
        let d = self.dim;
        let normed = self.norm.forward(ctx, x)?;
        let qkv = self.qkv.forward(ctx, normed)?;
        let (n, _, h, w) = ctx.value(qkv).dims4()?;
        let t = h * w;
        let tape = &mut *ctx.tape;
        let parts = tape.split(qkv, 1, &[d, d, d])?;
        let q = tape.reshape(parts[0], &[n, d, t])?;
        let k = tape.reshape(parts[1], &[n, d, t])?;
        let v = tape.reshape(parts[2], &[n, d, t])?;
        let q_tok = tape.transpose_last2(q)?;
        let scores = tape.matmul(q_tok, k)?;
        let scores = tape.scale(scores, T::of(1.0 / (d as f64).sqrt()))?;
        let weights = tape.softmax(scores, 2)?;
        let v_tok = tape.transpose_last2(v)?;
        let attended = tape.matmul(weights, v_tok)?;
        let attended = tape.transpose_last2(attended)?;
        let mut output = tape.reshape(attended, &[n, d, h, w])?;
        if let Some(out) = &self.out {
            output = out.forward(ctx, output)?;
        }
        Ok(AttentionTrace { output, weights, qkv })
    }
}
