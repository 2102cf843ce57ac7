use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dyglnet::config::KeyValues;
use dyglnet::data::{synth_dataset, write_dataset, DatasetManifest, Pnm, Split};
use dyglnet::network::{Checkpoint, MODEL_KEYS, REFERENCE_PARAMS};
use dyglnet::train::{self, SampleSource, TrainData, TRAIN_KEYS};
use dyglnet::{Model, ModelConfig, TrainConfig};

/// Binary segmentation network: training, evaluation and inference on the CPU.
#[derive(Parser)]
#[command(name = "dyglnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a dataset manifest and write checkpoints and a log.
    Train {
        /// `key = value` file with model and training fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory (holding manifest.tsv) or manifest file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Generate this many synthetic samples into --data first.
        #[arg(long, value_name = "N")]
        synthetic: Option<usize>,
    },
    /// Print segmentation metrics.
    Eval {
        #[arg(long, requires = "data", conflicts_with_all = ["pred", "target"])]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Split evaluated with --ckpt.
        #[arg(long, default_value = "test")]
        split: Split,
        /// Predicted P5 mask, compared against --target.
        #[arg(long, requires = "target")]
        pred: Option<PathBuf>,
        #[arg(long, requires = "pred")]
        target: Option<PathBuf>,
    },
    /// Write the thresholded mask of one image as a P5 file.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        /// Check only this block.
        #[arg(long)]
        block: Option<String>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Print the parameter count and configuration.
    Info {
        #[arg(long, conflicts_with = "config")]
        ckpt: Option<PathBuf>,
        /// Model config file; defaults apply without either flag.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn read_config(path: Option<&Path>) -> Result<KeyValues> {
    let Some(path) = path else {
        return Ok(KeyValues::new());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let kv = KeyValues::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    let allowed: Vec<&str> = MODEL_KEYS.iter().chain(TRAIN_KEYS.iter()).copied().collect();
    kv.reject_unknown(&allowed).with_context(|| format!("in {}", path.display()))?;
    Ok(kv)
}

fn run_train(config: Option<&Path>, data: &Path, out: &Path, synthetic: Option<usize>) -> Result<()> {
    let kv = read_config(config)?;
    let model_cfg = ModelConfig::from_kv(&kv)?;
    let cfg = TrainConfig::from_kv(&kv)?;
    if let Some(n) = synthetic {
        let samples = synth_dataset(n, cfg.seed, model_cfg.input_size)?;
        write_dataset(&samples, data, [8, 1, 1], cfg.seed)
            .with_context(|| format!("writing synthetic data to {}", data.display()))?;
        eprintln!("wrote {n} synthetic samples to {}", data.display());
    }
    let manifest = DatasetManifest::load(data)?;
    let sets = TrainData::from_manifest(&manifest, model_cfg.input_size);
    let outcome = train::train(&model_cfg, &cfg, &sets, Some(out), |line| println!("{line}"))?;
    let r = &outcome.report;
    println!(
        "done steps={} best_epoch={} best_val_dice={} checkpoints={}",
        r.step_losses.len(),
        r.best_epoch,
        r.best_dice,
        out.display()
    );
    Ok(())
}

fn run_eval(
    ckpt: Option<&Path>,
    data: Option<&Path>,
    split: Split,
    pred: Option<&Path>,
    target: Option<&Path>,
) -> Result<()> {
    let report = match (ckpt, data, pred, target) {
        (_, _, Some(p), Some(t)) => train::compare_masks(&Pnm::read(p)?, &Pnm::read(t)?)?,
        (Some(c), Some(d), _, _) => {
            let model = Model::<f32>::load(c).with_context(|| format!("loading {}", c.display()))?;
            let manifest = DatasetManifest::load(d)?;
            let entries: Vec<_> = manifest.split(split).into_iter().cloned().collect();
            if entries.is_empty() {
                bail!("split {split} of {} is empty", d.display());
            }
            let source = SampleSource::Files {
                entries,
                size: model.cfg.input_size,
            };
            train::validate(&model, &source, 8)?
        }
        _ => bail!("eval needs --ckpt with --data, or --pred with --target"),
    };
    println!("{report}");
    println!("{}", report.record());
    Ok(())
}

fn run_predict(ckpt: &Path, image: &Path, out: &Path) -> Result<()> {
    let model = Model::<f32>::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let img = Pnm::read(image).with_context(|| format!("reading {}", image.display()))?;
    let mask = train::predict_mask(&model, &img)?;
    mask.write(out).with_context(|| format!("writing {}", out.display()))?;
    let fg = mask.pixels.iter().filter(|&&v| v > 127).count();
    println!("wrote {} ({}x{}, {fg} foreground pixels)", out.display(), mask.width, mask.height);
    Ok(())
}

fn run_gradcheck(block: Option<&str>, seeds: usize) -> Result<bool> {
    let rows = train::run_suite(block, seeds)?;
    println!("{:<24} {:>6} {:>14} {:>8} {:>8}  result", "block", "seeds", "max_rel_err", "checked", "skipped");
    for r in &rows {
        println!(
            "{:<24} {:>6} {:>14.3e} {:>8} {:>8}  {}",
            r.block,
            r.seeds,
            r.max_rel_err,
            r.checked,
            r.skipped,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    Ok(rows.iter().all(|r| r.passed))
}

fn run_info(ckpt: Option<&Path>, config: Option<&Path>) -> Result<()> {
    let (model, extra) = match ckpt {
        Some(c) => {
            let ck = Checkpoint::load(c).with_context(|| format!("loading {}", c.display()))?;
            (Model::<f32>::from_checkpoint(&ck)?, Some(ck.snapshot))
        }
        None => (Model::<f32>::build(ModelConfig::from_kv(&read_config(config)?)?, 0)?, None),
    };
    let n = model.param_count();
    println!("parameters = {n}");
    println!(
        "reference = {REFERENCE_PARAMS} (ratio {:.4})",
        n as f64 / REFERENCE_PARAMS as f64
    );
    println!("tensors = {}", model.params.len());
    println!("# config");
    let mut kv = model.cfg.to_kv();
    if let Some(snapshot) = extra {
        kv.extend(&snapshot);
    }
    print!("{}", kv.to_text());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train {
            config,
            data,
            out,
            synthetic,
        } => run_train(config.as_deref(), data, out, *synthetic).map(|_| true),
        Command::Eval {
            ckpt,
            data,
            split,
            pred,
            target,
        } => run_eval(ckpt.as_deref(), data.as_deref(), *split, pred.as_deref(), target.as_deref()).map(|_| true),
        Command::Predict { ckpt, image, out } => run_predict(ckpt, image, out).map(|_| true),
        Command::Gradcheck { block, seeds } => run_gradcheck(block.as_deref(), *seeds),
        Command::Info { ckpt, config } => run_info(ckpt.as_deref(), config.as_deref()).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
