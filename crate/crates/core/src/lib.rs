//! Batched toy transformer inference with KV cache eviction during both
//! prefilling and decoding.
//!
//! The crate is generic over the floating-point element type; the aliases at
//! the bottom fix it to `f32` or `f64`.
//!
//! * [`model`]: deterministic decoder-only transformer that reads keys and
//!   values from external caches.
//! * [`kv_cache`]: per-head caches with average-attention, most-recent-only and
//!   no-eviction policies.
//! * [`engine`]: left-padded batched generation (BM, ED, FKV) with traces.
//! * [`memory`]: peak KV pairs and the largest batch under a byte budget.
//! * [`bench`]: synthetic workloads, throughput measurement and sweeps.

pub mod bench;
pub mod engine;
mod error;
pub mod kv_cache;
pub mod memory;
pub mod model;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelWeightsF32 = model::ModelWeights<f32>;
pub type ModelWeightsF64 = model::ModelWeights<f64>;
pub type KvCacheF32 = kv_cache::KvCache<f32>;
pub type KvCacheF64 = kv_cache::KvCache<f64>;
pub type CacheSetF32 = model::CacheSet<f32>;
pub type CacheSetF64 = model::CacheSet<f64>;
pub type GenerationF32 = engine::Generation<f32>;
pub type GenerationF64 = engine::Generation<f64>;
