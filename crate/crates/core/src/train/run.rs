use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Ctx, Tape};
use crate::data::{augment, load_sample_sized, sample_rng, stack, AugmentConfig, DatasetManifest, ManifestEntry, SegmentationSample, Split};
use crate::error::{Error, Result};
use crate::loss::{hybrid_loss_var, LossConfig};
use crate::metrics::{MetricsAccumulator, MetricsReport};
use crate::network::{Checkpoint, Model, ModelConfig};
use crate::tensor::{Mode, Tensor};

use super::config::TrainConfig;
use super::optim::{adamw_step, clip_grad_norm, epoch_lr, AdamState};

/// Where samples come from: decoded up front or read on demand.
#[derive(Debug, Clone)]
pub enum SampleSource {
    Memory(Vec<SegmentationSample>),
    Files { entries: Vec<ManifestEntry>, size: usize },
}

impl SampleSource {
    pub fn len(&self) -> usize {
        match self {
            SampleSource::Memory(v) => v.len(),
            SampleSource::Files { entries, .. } => entries.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Result<SegmentationSample> {
        match self {
            SampleSource::Memory(v) => Ok(v[i].clone()),
            SampleSource::Files { entries, size } => load_sample_sized(&entries[i].image, &entries[i].mask, *size),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: SampleSource,
    pub valid: SampleSource,
}

impl TrainData {
    /// Train and valid splits of a manifest, resized to `size`.
    pub fn from_manifest(m: &DatasetManifest, size: usize) -> Self {
        let files = |split| SampleSource::Files {
            entries: m.split(split).into_iter().cloned().collect(),
            size,
        };
        TrainData {
            train: files(Split::Train),
            valid: files(Split::Valid),
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean hybrid loss over the epoch's steps.
    pub loss: f64,
    pub val_dice: f64,
    pub val_iou: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} lr={} loss={} val_dice={} val_iou={}",
            self.epoch, self.lr, self.loss, self.val_dice, self.val_iou
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Loss of every optimizer step in order.
    pub step_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_dice: f64,
    /// Validation metrics of the final parameters.
    pub final_metrics: MetricsReport,
}

pub struct TrainOutcome {
    pub model: Model<f32>,
    pub report: TrainReport,
}

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LOG_FILE: &str = "train.log";

/// Model tensors, optimizer moments under `optim.m.*` / `optim.v.*`, and a
/// snapshot of both configs plus progress counters.
pub fn training_checkpoint(model: &Model<f32>, adam: &AdamState<f32>, cfg: &TrainConfig, epoch: usize) -> Checkpoint {
    let mut ck = model.to_checkpoint();
    for (p, slot) in model.params.iter().zip(&adam.moments) {
        if let Some((m, v)) = slot {
            ck.push(format!("optim.m.{}", p.name), m);
            ck.push(format!("optim.v.{}", p.name), v);
        }
    }
    ck.snapshot.extend(&cfg.to_kv());
    ck.snapshot.set("step", adam.step);
    ck.snapshot.set("epoch", epoch);
    ck
}

/// Validation metrics in inference mode, thresholding probabilities at 0.5.
pub fn validate(model: &Model<f32>, source: &SampleSource, batch_size: usize) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::new();
    let idx: Vec<usize> = (0..source.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let samples = chunk.iter().map(|&i| source.get(i)).collect::<Result<Vec<_>>>()?;
        let (images, masks) = stack(&samples.iter().collect::<Vec<_>>())?;
        let logits = model.forward(&images)?;
        acc.add_logits(&logits, &masks, 0.5)?;
    }
    Ok(acc.finish())
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn make_batch(source: &SampleSource, idx: &[usize], aug: Option<&AugmentConfig>, epoch: usize) -> Result<(Tensor, Tensor)> {
    let mut samples = Vec::with_capacity(idx.len());
    for &i in idx {
        let s = source.get(i)?;
        samples.push(match aug {
            Some(cfg) => augment(&s, cfg, &mut sample_rng(cfg.seed, epoch, i))?,
            None => s,
        });
    }
    stack(&samples.iter().collect::<Vec<_>>())
}

/// One forward/backward/clip/AdamW step; returns the loss.
pub fn train_step(
    model: &mut Model<f32>,
    adam: &mut AdamState<f32>,
    images: Tensor,
    masks: &Tensor,
    loss_cfg: &LossConfig,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<f64> {
    model.params.zero_grads();
    let mut tape = Tape::new();
    let mut ctx = Ctx::new(&mut tape, &model.params, Mode::Train);
    let x = ctx.tape.constant(images)?;
    let logits = model.forward_on(&mut ctx, x)?;
    let loss = hybrid_loss_var(ctx.tape, logits, masks, loss_cfg)?;
    let updates = ctx.into_updates();
    let value = tape.value(loss).item()? as f64;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    tape.backward(loss, &mut model.params)?;
    model.params.apply_updates(updates)?;
    clip_grad_norm(&mut model.params, cfg.clip_norm)?;
    adamw_step(&mut model.params, adam, lr, cfg)?;
    Ok(value)
}

struct Output<'a> {
    dir: &'a Path,
}

impl Output<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn log(&self, line: &EpochLog) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(LOG_FILE))?;
        writeln!(f, "{line}")?;
        Ok(())
    }
}

/// Trains a freshly initialized model.
///
/// With `out_dir`, writes `last.ckpt` before the first step and after every
/// epoch, `best.ckpt` whenever validation Dice improves, `final.ckpt` at the
/// end, and appends each [`EpochLog`] to `train.log`. A non-finite loss or
/// gradient aborts the run and leaves `last.ckpt` at the last good epoch.
pub fn train(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    data: &TrainData,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() || data.valid.is_empty() {
        return Err(Error::Contract(format!(
            "training needs non-empty train and valid splits, got {} and {}",
            data.train.len(),
            data.valid.len()
        )));
    }
    let mut model = Model::<f32>::build(model_cfg.clone(), cfg.seed)?;
    let mut adam = AdamState::new(&model.params);
    let loss_cfg = cfg.loss();
    loss_cfg.validate()?;
    let aug = cfg.augment.then(|| AugmentConfig {
        seed: cfg.seed,
        ..AugmentConfig::default()
    });
    let out = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let o = Output { dir };
            training_checkpoint(&model, &adam, cfg, 0).save(o.path(LAST_CHECKPOINT))?;
            Some(o)
        }
        None => None,
    };

    let n = data.train.len();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let epochs = if cfg.max_steps == 0 {
        cfg.total_epochs
    } else {
        cfg.total_epochs.min(cfg.max_steps.div_ceil(per_epoch))
    };
    let mut report = TrainReport {
        epochs: Vec::new(),
        step_losses: Vec::new(),
        best_epoch: 0,
        best_dice: f64::NEG_INFINITY,
        final_metrics: MetricsReport::default(),
    };

    for epoch in 0..epochs {
        let lr = epoch_lr(epoch, cfg);
        let order = epoch_order(n, cfg.seed, epoch);
        let mut batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        if cfg.max_steps > 0 {
            batches.truncate(cfg.max_steps - report.step_losses.len());
        }
        let steps_before = report.step_losses.len();
        let result = thread::scope(|scope| -> Result<()> {
            let (tx, rx) = sync_channel(cfg.prefetch);
            let source = &data.train;
            let aug = aug.as_ref();
            let batches = &batches;
            scope.spawn(move || {
                for idx in batches {
                    if tx.send(make_batch(source, idx, aug, epoch)).is_err() {
                        break;
                    }
                }
            });
            for batch in rx {
                let (images, masks) = batch?;
                let step = report.step_losses.len() + 1;
                let loss = train_step(&mut model, &mut adam, images, &masks, &loss_cfg, lr, cfg)
                    .map_err(|e| Error::Numeric(format!("step {step}, epoch {epoch}: {e}")))?;
                report.step_losses.push(loss);
            }
            Ok(())
        });
        if let Err(e) = result {
            return Err(match &out {
                Some(o) => Error::Numeric(format!("{e}; last good checkpoint kept at {}", o.path(LAST_CHECKPOINT).display())),
                None => e,
            });
        }
        let losses = &report.step_losses[steps_before..];
        let metrics = validate(&model, &data.valid, cfg.batch_size)?;
        let line = EpochLog {
            epoch: epoch + 1,
            lr,
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            val_dice: metrics.dice,
            val_iou: metrics.iou,
        };
        if let Some(o) = &out {
            o.log(&line)?;
            let ck = training_checkpoint(&model, &adam, cfg, epoch + 1);
            if metrics.dice > report.best_dice {
                ck.save(o.path(BEST_CHECKPOINT))?;
            }
            ck.save(o.path(LAST_CHECKPOINT))?;
        }
        if metrics.dice > report.best_dice {
            report.best_dice = metrics.dice;
            report.best_epoch = epoch + 1;
        }
        on_epoch(&line);
        report.epochs.push(line);
        report.final_metrics = metrics;
    }
    if let Some(o) = &out {
        training_checkpoint(&model, &adam, cfg, epochs).save(o.path(FINAL_CHECKPOINT))?;
    }
    Ok(TrainOutcome { model, report })
}
