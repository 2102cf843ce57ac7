pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{ConvSpec, DType, Element, Tensor};
pub use network::{Model, ModelConfig};
pub use train::TrainConfig;
