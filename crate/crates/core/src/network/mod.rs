//! The full encoder/decoder network, its configuration and checkpoints.

mod checkpoint;
mod model;

pub use checkpoint::{Checkpoint, StoredTensor, MAGIC, VERSION};
pub use model::{Activations, Model, ModelConfig, Network, MODEL_KEYS, REFERENCE_PARAMS};
