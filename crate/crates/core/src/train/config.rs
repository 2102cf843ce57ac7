use crate::config::KeyValues;
use crate::error::{config_err, Result};
use crate::loss::LossConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub poly_power: f64,
    pub batch_size: usize,
    /// Global L2 threshold for gradient clipping.
    pub clip_norm: f64,
    pub seed: u64,
    /// BCE weight of the hybrid loss.
    pub lambda: f64,
    /// Stop after this many optimizer steps; 0 runs every epoch.
    pub max_steps: usize,
    /// Apply the training-time augmentation pipeline.
    pub augment: bool,
    /// Batches prepared ahead of the optimizer.
    pub prefetch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-3,
            weight_decay: 3e-5,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            warmup_epochs: 10,
            total_epochs: 130,
            poly_power: 0.9,
            batch_size: 16,
            clip_norm: 1.0,
            seed: 42,
            lambda: 0.5,
            max_steps: 0,
            augment: true,
            prefetch: 2,
        }
    }
}

/// Config-file keys read by [`TrainConfig::from_kv`].
pub const TRAIN_KEYS: [&str; 14] = [
    "lr0",
    "weight_decay",
    "betas",
    "adam_eps",
    "warmup_epochs",
    "total_epochs",
    "poly_power",
    "batch_size",
    "clip_norm",
    "seed",
    "lambda",
    "max_steps",
    "augment",
    "prefetch",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.betas;
        let checks = [
            (self.lr0 > 0.0, "lr0 must be > 0"),
            (self.weight_decay >= 0.0, "weight_decay must be >= 0"),
            ((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2), "betas must lie in [0, 1)"),
            (self.adam_eps > 0.0, "adam_eps must be > 0"),
            (self.total_epochs >= 1, "total_epochs must be >= 1"),
            (self.warmup_epochs < self.total_epochs, "warmup_epochs must be < total_epochs"),
            (self.poly_power > 0.0, "poly_power must be > 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.clip_norm > 0.0, "clip_norm must be > 0"),
            ((0.0..=1.0).contains(&self.lambda), "lambda must lie in [0, 1]"),
            (self.prefetch >= 1, "prefetch must be >= 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(config_err!("{msg}"));
            }
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            ..LossConfig::default()
        }
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("lr0", self.lr0);
        kv.set("weight_decay", self.weight_decay);
        kv.set("betas", format!("{},{}", self.betas.0, self.betas.1));
        kv.set("adam_eps", self.adam_eps);
        kv.set("warmup_epochs", self.warmup_epochs);
        kv.set("total_epochs", self.total_epochs);
        kv.set("poly_power", self.poly_power);
        kv.set("batch_size", self.batch_size);
        kv.set("clip_norm", self.clip_norm);
        kv.set("seed", self.seed);
        kv.set("lambda", self.lambda);
        kv.set("max_steps", self.max_steps);
        kv.set("augment", self.augment);
        kv.set("prefetch", self.prefetch);
        kv
    }

    /// Reads [`TRAIN_KEYS`] over the defaults; other keys are ignored.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        macro_rules! read {
            ($($field:ident),*) => {
                $(if let Some(v) = kv.parse_opt(stringify!($field))? {
                    cfg.$field = v;
                })*
            };
        }
        read!(lr0, weight_decay, adam_eps, warmup_epochs, total_epochs, poly_power, batch_size, clip_norm, seed, lambda, max_steps, augment, prefetch);
        if let Some(v) = kv.parse_list::<f64>("betas")? {
            match v[..] {
                [b1, b2] => cfg.betas = (b1, b2),
                _ => return Err(config_err!("betas needs 2 entries, got {}", v.len())),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
