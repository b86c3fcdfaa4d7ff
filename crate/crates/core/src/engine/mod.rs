//! Batched generation loops for the three cache methods.

mod batch;
mod config;
mod reference;
mod run;
mod schedule;

pub use batch::{pad_batch, Batch};
pub use config::{Method, RunConfig, DEFAULT_ED_KVMAX, DEFAULT_EVICTION_AMOUNT, DEFAULT_MAX_GEN};
pub use reference::{dense_logits, full_attention_reference, ReferenceOutput};
pub use run::{generate, run_bm, run_ed, run_fkv, CacheEviction, Generation, PhaseTimings, RunOptions};
pub use schedule::{expected_trace, GenerationTrace, TraceEvent};
