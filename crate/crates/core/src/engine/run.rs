use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::batch::Batch;
use super::config::{Method, RunConfig};
use super::schedule::{GenerationTrace, TraceEvent};
use crate::error::{Error, Result};
use crate::kv_cache::{EvictionEvent, EvictionTrigger, KvCache};
use crate::model::{forward_block, greedy_batch, CacheSet, ModelWeights, TokenId};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep the logits each generated token was chosen from.
    pub keep_logits: bool,
    /// Keep every per-cache eviction event (evicted kv ids included).
    pub log_evictions: bool,
}

/// An eviction event of one specific cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEviction {
    pub layer: usize,
    pub sample: usize,
    pub head: usize,
    #[serde(flatten)]
    pub event: EvictionEvent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub prefill_secs: f64,
    pub decode_secs: f64,
}

impl PhaseTimings {
    pub fn total_secs(&self) -> f64 {
        self.prefill_secs + self.decode_secs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation<T> {
    /// `[batch][max_gen]` generated token ids.
    pub tokens: Vec<Vec<TokenId>>,
    /// `[batch][max_gen][vocab]`, when requested.
    pub logits: Option<Vec<Vec<Vec<T>>>>,
    pub trace: GenerationTrace,
    pub evictions: Vec<CacheEviction>,
    pub timings: PhaseTimings,
}

struct Runner<'a, T> {
    weights: &'a ModelWeights<T>,
    batch: &'a Batch,
    caches: CacheSet<T>,
    opts: RunOptions,
    trace: GenerationTrace,
    evictions: Vec<CacheEviction>,
    tokens: Vec<Vec<TokenId>>,
    logits: Option<Vec<Vec<Vec<T>>>>,
    timings: PhaseTimings,
}

impl<'a, T: Scalar> Runner<'a, T> {
    fn new(weights: &'a ModelWeights<T>, batch: &'a Batch, cfg: &RunConfig, opts: RunOptions) -> Result<Self> {
        cfg.validate()?;
        if batch.is_empty() {
            return Err(Error::input("empty batch"));
        }
        if weights.config != cfg.model {
            return Err(Error::config("weights were generated for a different model config"));
        }
        let last_position = batch.padded_len + cfg.max_gen - 1;
        if last_position > weights.config.max_position {
            return Err(Error::config(format!(
                "prompt of {} slots plus {} generated tokens exceeds max_position {}",
                batch.padded_len, cfg.max_gen, weights.config.max_position
            )));
        }
        let m = &weights.config;
        let b = batch.len();
        // ED holds the whole prompt before its first collapse
        let capacity = match cfg.method {
            Method::Ed => cfg.effective_kvmax()?.max(batch.padded_len),
            _ => cfg.effective_kvmax()?,
        };
        Ok(Self {
            weights,
            batch,
            caches: CacheSet::new(m.num_layers, b, m.num_heads, m.head_dim, capacity),
            opts,
            trace: GenerationTrace::default(),
            evictions: Vec::new(),
            tokens: vec![Vec::with_capacity(cfg.max_gen); b],
            logits: opts.keep_logits.then(|| vec![Vec::with_capacity(cfg.max_gen); b]),
            timings: PhaseTimings::default(),
        })
    }

    fn cache_len(&self) -> usize {
        self.caches.max_len()
    }

    fn emit(&mut self, logits: Vec<Vec<T>>) {
        let next = greedy_batch(&logits);
        for (row, tok) in self.tokens.iter_mut().zip(next) {
            row.push(tok);
        }
        if let Some(kept) = self.logits.as_mut() {
            for (row, l) in kept.iter_mut().zip(logits) {
                row.push(l);
            }
        }
    }

    fn prefill(&mut self, t0: usize, t1: usize) -> Result<()> {
        let start = Instant::now();
        let before = self.cache_len();
        let (toks, mask) = self.batch.block(t0, t1);
        let positions: Vec<usize> = (t0..t1).collect();
        let out = forward_block(self.weights, &toks, &positions, &mask, &mut self.caches, false)?;
        self.timings.prefill_secs += start.elapsed().as_secs_f64();
        self.trace.push(TraceEvent::Prefill {
            t0,
            t1,
            cache_len_before: before,
            cache_len_after: self.cache_len(),
        });
        if t1 == self.batch.padded_len {
            self.emit(out.logits);
        }
        Ok(())
    }

    fn decode(&mut self, t: usize) -> Result<()> {
        let start = Instant::now();
        let before = self.cache_len();
        let position = self.batch.padded_len + t - 1;
        let toks: Vec<Vec<TokenId>> = self
            .tokens
            .iter()
            .map(|row| vec![*row.last().expect("prefill emitted a token")])
            .collect();
        let mask = vec![vec![false]; toks.len()];
        let out = forward_block(self.weights, &toks, &[position], &mask, &mut self.caches, false)?;
        self.timings.decode_secs += start.elapsed().as_secs_f64();
        self.trace.push(TraceEvent::Decode {
            step: t,
            position,
            cache_len_before: before,
            cache_len_after: self.cache_len(),
        });
        self.emit(out.logits);
        Ok(())
    }

    fn evict(
        &mut self,
        trigger: EvictionTrigger,
        step_index: usize,
        rule: impl Fn(&mut KvCache<T>) -> Result<crate::kv_cache::Evicted>,
    ) -> Result<()> {
        let start = Instant::now();
        let before = self.cache_len();
        let log = self.opts.log_evictions;
        for ((layer, sample, head), cache) in self.caches.iter_indexed_mut() {
            let evicted = rule(cache)?;
            if log {
                self.evictions.push(CacheEviction {
                    layer,
                    sample,
                    head,
                    event: evicted.into_event(trigger, step_index),
                });
            }
        }
        let elapsed = start.elapsed().as_secs_f64();
        match trigger {
            EvictionTrigger::PrefillBlock => self.timings.prefill_secs += elapsed,
            EvictionTrigger::DecodeStep => self.timings.decode_secs += elapsed,
        }
        self.trace.push(TraceEvent::Evict {
            trigger,
            step_index,
            cache_len_before: before,
            cache_len_after: self.cache_len(),
        });
        Ok(())
    }

    fn finish(self) -> Generation<T> {
        Generation {
            tokens: self.tokens,
            logits: self.logits,
            trace: self.trace,
            evictions: self.evictions,
            timings: self.timings,
        }
    }
}

fn expect_method(cfg: &RunConfig, method: Method) -> Result<()> {
    if cfg.method != method {
        return Err(Error::config(format!(
            "{method} runner called with a {} config",
            cfg.method
        )));
    }
    Ok(())
}

/// Prefill-and-decode eviction with the average-attention rule.
///
/// The first block holds `min(s, kvmax)` slots. While slots remain, `p` pairs
/// are evicted and the next `min(p, s - t1)` slots are processed. Decoding then
/// evicts `p` pairs whenever the caches are full before processing each token.
pub fn run_bm<T: Scalar>(
    batch: &Batch,
    cfg: &RunConfig,
    weights: &ModelWeights<T>,
    opts: RunOptions,
) -> Result<Generation<T>> {
    expect_method(cfg, Method::Bm)?;
    let mut r = Runner::new(weights, batch, cfg, opts)?;
    let s = batch.padded_len;
    let kvmax = cfg.effective_kvmax()?;
    let p = cfg.p;

    let mut t1 = s.min(kvmax);
    r.prefill(0, t1)?;
    let mut block = 1;
    while t1 < s {
        let curr_id = t1 - 1;
        r.evict(EvictionTrigger::PrefillBlock, block, |c| c.evict_smallest(p, curr_id))?;
        let t0 = t1;
        t1 = s.min(t0 + p);
        r.prefill(t0, t1)?;
        block += 1;
    }

    for t in 1..cfg.max_gen {
        if r.cache_len() == kvmax {
            let curr_id = s + t - 1;
            r.evict(EvictionTrigger::DecodeStep, t, |c| c.evict_smallest(p, curr_id))?;
        }
        r.decode(t)?;
    }
    Ok(r.finish())
}

/// Extreme decoding-only baseline: uncompressed single-block prefill, then the
/// caches are collapsed to their most recent pair after prefill and whenever
/// they reach `kvmax` during decoding.
pub fn run_ed<T: Scalar>(
    batch: &Batch,
    cfg: &RunConfig,
    weights: &ModelWeights<T>,
    opts: RunOptions,
) -> Result<Generation<T>> {
    expect_method(cfg, Method::Ed)?;
    let mut r = Runner::new(weights, batch, cfg, opts)?;
    let kvmax = cfg.effective_kvmax()?;
    r.prefill(0, batch.padded_len)?;
    r.evict(EvictionTrigger::PrefillBlock, 1, KvCache::evict_all_but_most_recent)?;
    for t in 1..cfg.max_gen {
        r.decode(t)?;
        if r.cache_len() == kvmax {
            r.evict(EvictionTrigger::DecodeStep, t, KvCache::evict_all_but_most_recent)?;
        }
    }
    Ok(r.finish())
}

/// Full-cache baseline: single-block prefill, no eviction.
pub fn run_fkv<T: Scalar>(
    batch: &Batch,
    cfg: &RunConfig,
    weights: &ModelWeights<T>,
    opts: RunOptions,
) -> Result<Generation<T>> {
    expect_method(cfg, Method::Fkv)?;
    let mut r = Runner::new(weights, batch, cfg, opts)?;
    r.prefill(0, batch.padded_len)?;
    for t in 1..cfg.max_gen {
        r.decode(t)?;
    }
    Ok(r.finish())
}

/// Dispatches on `cfg.method`.
pub fn generate<T: Scalar>(
    batch: &Batch,
    cfg: &RunConfig,
    weights: &ModelWeights<T>,
    opts: RunOptions,
) -> Result<Generation<T>> {
    match cfg.method {
        Method::Bm => run_bm(batch, cfg, weights, opts),
        Method::Ed => run_ed(batch, cfg, weights, opts),
        Method::Fkv => run_fkv(batch, cfg, weights, opts),
    }
}
