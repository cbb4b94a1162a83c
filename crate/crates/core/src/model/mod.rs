//! The interpolator network: masked-value embedding, partial-attention
//! transformer layers and a pointwise output head.

pub mod checkpoint;
pub mod config;
pub mod network;
pub mod params;


pub use checkpoint::Checkpoint;
pub use config::{AttentionMode, ModelConfig};
pub use network::{
    embed, forward, loss, loss_and_grad, loss_value, partial_attention_layer, record,
    scoped_loss, AttentionMap, ForwardOutput, LossScope,
};
pub use params::{init_params, NamedTensor, ParamSet};
