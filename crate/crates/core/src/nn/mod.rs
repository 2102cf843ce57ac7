//! Building blocks of the network: DyT, single-head attention, dilated
//! depthwise fusion, the SHDC block, the FFN and the dynamic upsampler.

mod attention;
mod dyt;
mod ffn;
mod layers;
mod msdc;
mod shdc;
mod upsample;

pub use attention::{AttentionTrace, SingleHeadAttention, TokenNorm};
pub use dyt::{dyt, DyT, DyTParams};
pub use ffn::{hidden_channels, Ffn};
pub use layers::{BatchNorm2d, Conv2d, Init, BN_EPS, BN_MOMENTUM};
pub use msdc::Msdc;
pub use shdc::{Fusion, ShdcBlock, ShdcConfig};
pub use upsample::{init_offsets, DyFusionUp, DyFusionUpConfig, UpsampleMode};

