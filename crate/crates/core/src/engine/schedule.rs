//! Phase traces of the three generation loops and a model-free schedule
//! generator that reproduces them from `(s, kvmax, p, max_gen)` alone.

use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::kv_cache::EvictionTrigger;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    /// Slots `[t0, t1)` processed in one forward pass.
    Prefill {
        t0: usize,
        t1: usize,
        cache_len_before: usize,
        cache_len_after: usize,
    },
    /// Eviction in every cache. `step_index` is the 1-based index of the prefill
    /// block that follows, or the decode step `t`.
    Evict {
        trigger: EvictionTrigger,
        step_index: usize,
        cache_len_before: usize,
        cache_len_after: usize,
    },
    /// Decode step `t` processed the token at `position`.
    Decode {
        step: usize,
        position: usize,
        cache_len_before: usize,
        cache_len_after: usize,
    },
}

impl TraceEvent {
    pub fn cache_len_after(&self) -> usize {
        match *self {
            Self::Prefill { cache_len_after, .. }
            | Self::Evict { cache_len_after, .. }
            | Self::Decode { cache_len_after, .. } => cache_len_after,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub events: Vec<TraceEvent>,
    pub peak_kv_pairs_observed: usize,
}

impl GenerationTrace {
    pub fn push(&mut self, event: TraceEvent) {
        self.peak_kv_pairs_observed = self.peak_kv_pairs_observed.max(event.cache_len_after());
        self.events.push(event);
    }

    pub fn eviction_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Evict { .. }))
            .count()
    }

    /// Cache lengths after every event, in order.
    pub fn cache_lengths(&self) -> Vec<usize> {
        self.events.iter().map(TraceEvent::cache_len_after).collect()
    }
}

/// Expected trace of `method` for a padded prompt of `s` slots, computed by
/// counting alone. `kvmax` is ignored for FKV and `p` for ED/FKV.
pub fn expected_trace(method: Method, s: usize, kvmax: usize, p: usize, max_gen: usize) -> GenerationTrace {
    let mut trace = GenerationTrace::default();
    let mut len: usize;
    let decode = |trace: &mut GenerationTrace, len: &mut usize, t: usize| {
        trace.push(TraceEvent::Decode {
            step: t,
            position: s + t - 1,
            cache_len_before: *len,
            cache_len_after: *len + 1,
        });
        *len += 1;
    };
    match method {
        Method::Bm => {
            let mut t1 = s.min(kvmax);
            trace.push(TraceEvent::Prefill { t0: 0, t1, cache_len_before: 0, cache_len_after: t1 });
            len = t1;
            let mut block = 1;
            while t1 < s {
                trace.push(TraceEvent::Evict {
                    trigger: EvictionTrigger::PrefillBlock,
                    step_index: block,
                    cache_len_before: len,
                    cache_len_after: len - p,
                });
                len -= p;
                let t0 = t1;
                t1 = s.min(t0 + p);
                trace.push(TraceEvent::Prefill {
                    t0,
                    t1,
                    cache_len_before: len,
                    cache_len_after: len + (t1 - t0),
                });
                len += t1 - t0;
                block += 1;
            }
            for t in 1..max_gen {
                if len == kvmax {
                    trace.push(TraceEvent::Evict {
                        trigger: EvictionTrigger::DecodeStep,
                        step_index: t,
                        cache_len_before: len,
                        cache_len_after: len - p,
                    });
                    len -= p;
                }
                decode(&mut trace, &mut len, t);
            }
        }
        Method::Ed => {
            trace.push(TraceEvent::Prefill { t0: 0, t1: s, cache_len_before: 0, cache_len_after: s });
            trace.push(TraceEvent::Evict {
                trigger: EvictionTrigger::PrefillBlock,
                step_index: 1,
                cache_len_before: s,
                cache_len_after: 1,
            });
            len = 1;
            for t in 1..max_gen {
                decode(&mut trace, &mut len, t);
                if len == kvmax {
                    trace.push(TraceEvent::Evict {
                        trigger: EvictionTrigger::DecodeStep,
                        step_index: t,
                        cache_len_before: len,
                        cache_len_after: 1,
                    });
                    len = 1;
                }
            }
        }
        Method::Fkv => {
            trace.push(TraceEvent::Prefill { t0: 0, t1: s, cache_len_before: 0, cache_len_after: s });
            len = s;
            for t in 1..max_gen {
                decode(&mut trace, &mut len, t);
            }
        }
    }
    trace
}
