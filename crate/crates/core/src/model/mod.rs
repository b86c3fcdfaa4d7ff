//! Minimal deterministic decoder-only transformer reading from external KV caches.

mod attention;
mod config;
mod forward;
pub(crate) mod linalg;
mod weights;

pub use attention::{attention_forward, AttentionBlockResult, AttentionWeights};
pub use config::{ModelConfig, TokenId, BOS_TOKEN, FIRST_CONTENT_TOKEN, PAD_TOKEN};
pub use forward::{forward_block, greedy_batch, greedy_next, BlockOutput, CacheSet};
pub use weights::{init_model, LayerWeights, ModelWeights};
