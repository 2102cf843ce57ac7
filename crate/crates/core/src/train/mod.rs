//! Optimizer, learning-rate schedule, training loop and the gradient-check
//! suite.

mod config;
mod infer;
mod optim;
mod run;
mod suite;

pub use config::{TrainConfig, TRAIN_KEYS};
pub use infer::{compare_masks, predict_mask};
pub use optim::{adamw_step, clip_grad_norm, epoch_lr, lr_at, AdamState};
pub use run::{
    train, train_step, training_checkpoint, validate, EpochLog, SampleSource, TrainData, TrainOutcome, TrainReport,
    BEST_CHECKPOINT, FINAL_CHECKPOINT, LAST_CHECKPOINT, LOG_FILE,
};
pub use suite::{check_block, run_suite, SuiteRow, GRADCHECK_BLOCKS};
