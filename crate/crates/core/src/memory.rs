//! Closed-form KV memory accounting per method.
//!
//! A decoding-only method must hold the whole uncompressed prompt during
//! prefill, so its per-sample peak is at least `s` pairs even though only
//! `kvmax` survive into decoding. Block-wise prefill-and-decode eviction never
//! exceeds `kvmax`, which is what lets it fit a larger batch in the same budget.

use serde::{Deserialize, Serialize};

use crate::engine::Method;
use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemorySpec {
    pub num_layers: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    pub dtype_bytes: usize,
    /// Total bytes available for KV storage.
    pub budget_bytes: u64,
    /// Flat non-KV allowance charged per sample.
    pub overhead_bytes_per_sample: u64,
}

impl MemorySpec {
    pub fn from_model(model: &ModelConfig, budget_bytes: u64) -> Self {
        Self {
            num_layers: model.num_layers,
            num_heads: model.num_heads,
            head_dim: model.head_dim,
            dtype_bytes: model.dtype_bytes,
            budget_bytes,
            overhead_bytes_per_sample: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.num_heads == 0 || self.head_dim == 0 || self.dtype_bytes == 0 {
            return Err(Error::config("memory spec dimensions must be positive"));
        }
        if self.budget_bytes == 0 {
            return Err(Error::config("budget must be positive"));
        }
        if self.budget_bytes < kv_pair_bytes(self) {
            return Err(Error::config(format!(
                "budget of {} bytes is smaller than one KV pair ({} bytes)",
                self.budget_bytes,
                kv_pair_bytes(self)
            )));
        }
        Ok(())
    }
}

/// Bytes of one token's keys and values across all layers and heads.
pub fn kv_pair_bytes(spec: &MemorySpec) -> u64 {
    2 * (spec.num_layers * spec.num_heads * spec.head_dim * spec.dtype_bytes) as u64
}

/// Largest number of pairs any single cache holds during a run.
///
/// `kvmax` is ignored for FKV. `max_gen >= 1`.
pub fn peak_kv_pairs(method: Method, padded_len: usize, kvmax: usize, max_gen: usize) -> usize {
    let full = padded_len + max_gen.max(1) - 1;
    match method {
        Method::Bm => kvmax.min(full),
        Method::Ed => padded_len.max(kvmax.min(max_gen)),
        Method::Fkv => full,
    }
}

/// Bytes one sample needs at its peak, overhead included.
pub fn bytes_per_sample(spec: &MemorySpec, peak_pairs: usize) -> u64 {
    peak_pairs as u64 * kv_pair_bytes(spec) + spec.overhead_bytes_per_sample
}

/// Largest batch whose peak fits the budget; 0 means even one sample does not.
pub fn max_batch(spec: &MemorySpec, method: Method, padded_len: usize, kvmax: usize, max_gen: usize) -> usize {
    let per_sample = bytes_per_sample(spec, peak_kv_pairs(method, padded_len, kvmax, max_gen));
    if per_sample == 0 {
        return usize::MAX;
    }
    (spec.budget_bytes / per_sample) as usize
}

/// Prefill pairs a decoding-only method holds that are idle once decoding starts.
pub fn idle_pairs(padded_len: usize, kvmax: usize, batch_size: usize) -> usize {
    padded_len.saturating_sub(kvmax) * batch_size
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(l: usize, h: usize, d: usize, e: usize, budget: u64) -> MemorySpec {
        MemorySpec {
            num_layers: l,
            num_heads: h,
            head_dim: d,
            dtype_bytes: e,
            budget_bytes: budget,
            overhead_bytes_per_sample: 0,
        }
    }

    #[test]
    fn pair_bytes() {
        assert_eq!(kv_pair_bytes(&spec(2, 4, 8, 4, 1)), 512);
        assert_eq!(kv_pair_bytes(&spec(2, 4, 8, 8, 1)), 1024);
        assert_eq!(kv_pair_bytes(&spec(1, 1, 1, 1, 1)), 2);
    }

    #[test]
    fn peaks() {
        assert_eq!(peak_kv_pairs(Method::Bm, 3584, 1024, 512), 1024);
        assert_eq!(peak_kv_pairs(Method::Ed, 3584, 2, 512), 3584);
        assert_eq!(peak_kv_pairs(Method::Fkv, 100, 0, 512), 611);
        // short prompt: BM grows into its cap during decoding
        assert_eq!(peak_kv_pairs(Method::Bm, 10, 64, 8), 17);
        assert_eq!(peak_kv_pairs(Method::Ed, 3, 65, 512), 65);
        assert_eq!(peak_kv_pairs(Method::Ed, 3, 65, 10), 10);
    }

    #[test]
    fn worked_budget_example() {
        let s = spec(2, 4, 8, 4, 1 << 20);
        // BM peak 64 pairs
        assert_eq!(max_batch(&s, Method::Bm, 512, 64, 512), 32);
        assert_eq!(max_batch(&s, Method::Ed, 512, 2, 512), 4);
        let tiny = spec(2, 4, 8, 4, 1000);
        assert_eq!(max_batch(&tiny, Method::Ed, 512, 2, 512), 0);
    }

    #[test]
    fn overhead_counts_per_sample() {
        let mut s = spec(1, 1, 1, 1, 100);
        s.overhead_bytes_per_sample = 8;
        // BM peak 1 pair = 2 bytes + 8 overhead
        assert_eq!(max_batch(&s, Method::Bm, 5, 1, 1), 10);
    }

    #[test]
    fn idle() {
        assert_eq!(idle_pairs(1024, 1024, 4), 0);
        assert_eq!(idle_pairs(100, 1024, 4), 0);
        assert_eq!(idle_pairs(3584, 1024, 4), 10_240);
        assert!(idle_pairs(3584, 1024, 5) > idle_pairs(3584, 1024, 4));
        assert!(idle_pairs(3585, 1024, 4) > idle_pairs(3584, 1024, 4));
    }

    #[test]
    fn spec_validation() {
        assert!(spec(1, 1, 1, 1, 0).validate().is_err());
        assert!(spec(1, 1, 1, 1, 1).validate().is_err());
        assert!(spec(1, 1, 1, 1, 2).validate().is_ok());
    }
}
