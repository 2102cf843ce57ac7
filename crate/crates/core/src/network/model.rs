use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Ctx, ParamStore, Tape, Var};
use crate::config::{join_list, KeyValues};
use crate::error::{config_err, dim_err, Result};
use crate::nn::{Conv2d, DyFusionUp, DyFusionUpConfig, Init, ShdcBlock, ShdcConfig, UpsampleMode};
use crate::tensor::{ConvSpec, Element, Mode, Tensor};

/// Parameter budget of the reference network, in trainable scalars.
pub const REFERENCE_PARAMS: usize = 9_980_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub stage_channels: [usize; 4],
    /// First entry: stride-1 conv layers after the stride-2 stem conv.
    /// Others: SHDC blocks per encoder stage.
    pub blocks_per_stage: [usize; 4],
    pub split_ratio: f64,
    pub dilation_rates: Vec<usize>,
    pub ffn_ratio: f64,
    pub sampler_groups: usize,
    pub input_channels: usize,
    pub output_channels: usize,
    pub input_size: usize,
    pub use_dyt: bool,
    pub upsampler: UpsampleMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            stage_channels: [32, 64, 128, 256],
            blocks_per_stage: [1, 1, 1, 1],
            split_ratio: 0.5,
            dilation_rates: vec![1, 2, 3],
            ffn_ratio: 4.0,
            sampler_groups: 4,
            input_channels: 3,
            output_channels: 1,
            input_size: 224,
            use_dyt: true,
            upsampler: UpsampleMode::Dynamic,
        }
    }
}

/// Config-file keys read by [`ModelConfig::from_kv`].
pub const MODEL_KEYS: [&str; 11] = [
    "stage_channels",
    "blocks_per_stage",
    "split_ratio",
    "dilation_rates",
    "ffn_ratio",
    "sampler_groups",
    "input_channels",
    "output_channels",
    "input_size",
    "use_dyt",
    "upsampler",
];

fn four(v: Vec<usize>, key: &str) -> Result<[usize; 4]> {
    v.try_into().map_err(|v: Vec<usize>| config_err!("{key} needs 4 entries, got {}", v.len()))
}

impl ModelConfig {
    /// Small widths that train quickly on a CPU.
    pub fn tiny() -> Self {
        ModelConfig {
            stage_channels: [8, 16, 32, 64],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.stage_channels;
        if c[0] == 0 || c.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err!("stage channels must be positive and strictly increasing, got {c:?}"));
        }
        if self.blocks_per_stage[0] == 0 {
            return Err(config_err!("the stem needs at least one stride-1 conv"));
        }
        if self.input_channels == 0 || self.output_channels == 0 {
            return Err(config_err!("input and output channels must be >= 1"));
        }
        if self.input_size == 0 || self.input_size % 16 != 0 {
            return Err(config_err!("input size must be a positive multiple of 16, got {}", self.input_size));
        }
        for (i, &ci) in c.iter().enumerate().skip(1) {
            let cfg = self.shdc_config(ci, i >= 2);
            cfg.validate()?;
            if self.blocks_per_stage[i] > 0 && cfg.use_fusion && ci % 2 != 0 {
                return Err(config_err!("stage {} width {ci} must be even to split", i + 1));
            }
        }
        for d in self.decoder_configs() {
            d.validate()?;
        }
        Ok(())
    }

    fn shdc_config(&self, channels: usize, fusion: bool) -> ShdcConfig {
        ShdcConfig {
            split_ratio: self.split_ratio,
            dilation_rates: self.dilation_rates.clone(),
            ffn_ratio: self.ffn_ratio,
            use_fusion: fusion,
            use_dyt: self.use_dyt,
            ..ShdcConfig::new(channels)
        }
    }

    /// Decoder stages from deepest to shallowest; the last one fuses with
    /// the input image.
    pub fn decoder_configs(&self) -> Vec<DyFusionUpConfig> {
        let c = self.stage_channels;
        let pairs = [(c[3], c[2]), (c[2], c[1]), (c[1], c[0]), (c[0], self.input_channels)];
        pairs
            .iter()
            .map(|&(cin, skip)| DyFusionUpConfig {
                groups: self.sampler_groups,
                fuse_dilations: self.dilation_rates.clone(),
                mode: self.upsampler,
                ..DyFusionUpConfig::new(cin, skip)
            })
            .collect()
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("stage_channels", join_list(&self.stage_channels));
        kv.set("blocks_per_stage", join_list(&self.blocks_per_stage));
        kv.set("split_ratio", self.split_ratio);
        kv.set("dilation_rates", join_list(&self.dilation_rates));
        kv.set("ffn_ratio", self.ffn_ratio);
        kv.set("sampler_groups", self.sampler_groups);
        kv.set("input_channels", self.input_channels);
        kv.set("output_channels", self.output_channels);
        kv.set("input_size", self.input_size);
        kv.set("use_dyt", self.use_dyt);
        kv.set(
            "upsampler",
            match self.upsampler {
                UpsampleMode::Dynamic => "dynamic",
                UpsampleMode::Bilinear => "bilinear",
            },
        );
        kv
    }

    /// Reads [`MODEL_KEYS`] over the defaults; other keys are ignored.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        if let Some(v) = kv.parse_list("stage_channels")? {
            cfg.stage_channels = four(v, "stage_channels")?;
        }
        if let Some(v) = kv.parse_list("blocks_per_stage")? {
            cfg.blocks_per_stage = four(v, "blocks_per_stage")?;
        }
        if let Some(v) = kv.parse_opt("split_ratio")? {
            cfg.split_ratio = v;
        }
        if let Some(v) = kv.parse_list("dilation_rates")? {
            cfg.dilation_rates = v;
        }
        if let Some(v) = kv.parse_opt("ffn_ratio")? {
            cfg.ffn_ratio = v;
        }
        if let Some(v) = kv.parse_opt("sampler_groups")? {
            cfg.sampler_groups = v;
        }
        if let Some(v) = kv.parse_opt("input_channels")? {
            cfg.input_channels = v;
        }
        if let Some(v) = kv.parse_opt("output_channels")? {
            cfg.output_channels = v;
        }
        if let Some(v) = kv.parse_opt("input_size")? {
            cfg.input_size = v;
        }
        if let Some(v) = kv.parse_opt("use_dyt")? {
            cfg.use_dyt = v;
        }
        match kv.get("upsampler") {
            None => {}
            Some("dynamic") => cfg.upsampler = UpsampleMode::Dynamic,
            Some("bilinear") => cfg.upsampler = UpsampleMode::Bilinear,
            Some(other) => return Err(config_err!("unknown upsampler {other:?}")),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
struct Stage {
    down: Conv2d,
    blocks: Vec<ShdcBlock>,
}

/// Layer structure; parameter values live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Network {
    stem: Vec<Conv2d>,
    stages: Vec<Stage>,
    decoder: Vec<DyFusionUp>,
    head: Conv2d,
}

/// Feature maps produced along one forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    /// Stem output and the three encoder stages, shallow to deep.
    pub encoder: Vec<Var>,
    /// Decoder outputs, deep to shallow.
    pub decoder: Vec<Var>,
    pub logits: Var,
}

impl Network {
    fn build<T: Element>(cfg: &ModelConfig, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) -> Result<Self> {
        let c = cfg.stage_channels;
        let conv3 = |stride| ConvSpec::new(stride, 1, 1, 1);
        let mut stem = vec![Conv2d::new(store, rng, "stem.conv0", cfg.input_channels, c[0], 3, conv3(2), true, Init::FanIn)?];
        for i in 0..cfg.blocks_per_stage[0] {
            let name = format!("stem.conv{}", i + 1);
            stem.push(Conv2d::new(store, rng, &name, c[0], c[0], 3, conv3(1), true, Init::FanIn)?);
        }
        let mut stages = Vec::new();
        for i in 1..4 {
            let prefix = format!("enc.stage{}", i + 1);
            let down = Conv2d::new(store, rng, &format!("{prefix}.down"), c[i - 1], c[i], 3, conv3(2), true, Init::FanIn)?;
            let mut blocks = Vec::new();
            for b in 0..cfg.blocks_per_stage[i] {
                let name = format!("{prefix}.shdc{b}");
                blocks.push(ShdcBlock::new(store, rng, &name, cfg.shdc_config(c[i], i >= 2))?);
            }
            stages.push(Stage { down, blocks });
        }
        let mut decoder = Vec::new();
        for (i, d) in cfg.decoder_configs().into_iter().enumerate() {
            decoder.push(DyFusionUp::new(store, rng, &format!("dec.up{}", i + 1), d)?);
        }
        let head = Conv2d::new(
            store,
            rng,
            "head",
            cfg.input_channels,
            cfg.output_channels,
            1,
            ConvSpec::default(),
            true,
            Init::FanIn,
        )?;
        Ok(Network { stem, stages, decoder, head })
    }

    pub fn forward<T: Element>(&self, ctx: &mut Ctx<'_, T>, image: Var) -> Result<Activations> {
        let (_, _, h, w) = ctx.value(image).dims4()?;
        if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
            return Err(dim_err!("input extents {h}x{w} must be positive multiples of 16"));
        }
        let mut x = image;
        for conv in &self.stem {
            x = conv.forward(ctx, x)?;
            x = ctx.tape.relu(x)?;
        }
        let mut encoder = vec![x];
        for stage in &self.stages {
            x = stage.down.forward(ctx, x)?;
            for block in &stage.blocks {
                x = block.forward(ctx, x)?;
            }
            encoder.push(x);
        }
        let skips = [encoder[2], encoder[1], encoder[0], image];
        let mut decoder = Vec::new();
        for (up, skip) in self.decoder.iter().zip(skips) {
            x = up.forward(ctx, x, skip)?;
            decoder.push(x);
        }
        let logits = self.head.forward(ctx, x)?;
        Ok(Activations { encoder, decoder, logits })
    }
}

/// Network structure together with its parameters.
#[derive(Debug, Clone)]
pub struct Model<T: Element = f32> {
    pub cfg: ModelConfig,
    pub net: Network,
    pub params: ParamStore<T>,
}

impl<T: Element> Model<T> {
    /// Deterministic initialization from `seed`.
    pub fn build(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let net = Network::build(&cfg, &mut params, &mut rng)?;
        Ok(Model { cfg, net, params })
    }

    /// Trainable scalar count.
    pub fn param_count(&self) -> usize {
        self.params.trainable_count()
    }

    /// Records a forward pass on `ctx`, whose store must be `self.params`.
    pub fn forward_on(&self, ctx: &mut Ctx<'_, T>, image: Var) -> Result<Var> {
        Ok(self.net.forward(ctx, image)?.logits)
    }

    /// Inference-mode logits `[N, out, H, W]`.
    pub fn forward(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let mut ctx = Ctx::new(&mut tape, &self.params, Mode::Eval);
        let x = ctx.tape.constant(image.clone())?;
        let y = self.forward_on(&mut ctx, x)?;
        Ok(tape.value(y).clone())
    }

    /// Same structure with values converted to another scalar type.
    pub fn cast<U: Element>(&self) -> Model<U> {
        Model {
            cfg: self.cfg.clone(),
            net: self.net.clone(),
            params: self.params.cast(),
        }
    }
}
