//! Patch-token transformer: input embedding with learned positions, a stack
//! of post-norm attention blocks and a flatten-and-project head.

mod bundle;
mod checkpoint;
mod config;
mod forward;
mod ops;
mod params;

pub use bundle::Model;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use config::{AttentionMode, ModelConfig};
pub use forward::{backward, forward_batch, forward_trace, forward_train, ForwardCache, ForwardTrace};
pub use ops::{
    attention, causal_mask, embed, forward, forward_with_trace, predict_raw, prepare_batch, project, transformer_block,
};
pub use params::{FreezeMask, ModelParameters, ParamArray, INIT_STD};
