use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::workload::Workload;
use crate::engine::{generate, pad_batch, GenerationTrace, Method, RunConfig, RunOptions};
use crate::error::{Error, Result};
use crate::memory::{max_batch, peak_kv_pairs, MemorySpec};
use crate::model::{ModelWeights, TokenId};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    /// The memory model says the batch does not fit the budget; nothing ran.
    Oom,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Oom => "oom",
        }
    }
}

/// Outcome of one `(method, b, kvmax)` pass over a workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub status: RunStatus,
    pub num_samples: usize,
    pub generated_tokens: usize,
    /// Generated tokens over wall-clock seconds of the whole pass.
    pub tokens_per_second: Option<f64>,
    pub wall_secs: f64,
    pub prefill_secs: f64,
    pub decode_secs: f64,
    /// Largest cache length observed (predicted, for OOM rows).
    pub peak_kv_pairs: usize,
    pub predicted_peak_kv_pairs: usize,
    /// Fraction of generated positions equal to the full-cache output.
    pub agreement_vs_fkv: Option<f64>,
    /// Mean absolute logit difference against the full-cache run.
    pub mean_logit_divergence: Option<f64>,
    pub mean_eviction_events_per_sample: f64,
    pub workload_digest: String,
    /// Hash of every batch's trace and generated tokens.
    pub trace_digest: String,
}

impl RunReport {
    pub fn is_oom(&self) -> bool {
        self.status == RunStatus::Oom
    }
}

/// Full-cache outputs for a workload under a given batch partition.
#[derive(Debug, Clone, PartialEq)]
pub struct FkvReference<T> {
    pub batch_size: usize,
    pub tokens: Vec<Vec<TokenId>>,
    pub logits: Vec<Vec<Vec<T>>>,
}

/// Runs FKV over `workload` in batches of `batch_size`, keeping logits.
pub fn fkv_reference<T: Scalar>(
    workload: &Workload,
    cfg: &RunConfig,
    batch_size: usize,
    weights: &ModelWeights<T>,
) -> Result<FkvReference<T>> {
    let fkv = RunConfig {
        method: Method::Fkv,
        batch_size,
        kvmax: None,
        ..*cfg
    };
    let mut tokens = Vec::with_capacity(workload.len());
    let mut logits = Vec::with_capacity(workload.len());
    let opts = RunOptions {
        keep_logits: true,
        ..Default::default()
    };
    for chunk in workload.batches(batch_size) {
        let g = generate(&pad_batch(chunk)?, &fkv, weights, opts)?;
        tokens.extend(g.tokens);
        logits.extend(g.logits.expect("requested"));
    }
    Ok(FkvReference {
        batch_size,
        tokens,
        logits,
    })
}

/// Fraction of positions where `a` and `b` agree. Both must have the same shape.
pub fn token_agreement(a: &[Vec<TokenId>], b: &[Vec<TokenId>]) -> f64 {
    let mut same = 0usize;
    let mut total = 0usize;
    for (x, y) in a.iter().zip(b) {
        total += x.len().max(y.len());
        same += x.iter().zip(y).filter(|(p, q)| p == q).count();
    }
    if total == 0 {
        1.0
    } else {
        same as f64 / total as f64
    }
}

fn mean_abs_diff<T: Scalar>(a: &[Vec<Vec<T>>], b: &[Vec<Vec<T>>]) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for (sa, sb) in a.iter().zip(b) {
        for (la, lb) in sa.iter().zip(sb) {
            for (&x, &y) in la.iter().zip(lb) {
                acc += (x - y).abs().to_f64_lossy();
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        acc / n as f64
    }
}

pub(crate) fn digest_traces(traces: &[GenerationTrace], tokens: &[Vec<TokenId>]) -> String {
    let mut h = Sha256::new();
    for t in traces {
        h.update(serde_json::to_vec(t).expect("trace serializes"));
    }
    for row in tokens {
        for tok in row {
            h.update(tok.to_le_bytes());
        }
        h.update([0xff]);
    }
    hex::encode(&h.finalize()[..16])
}

fn check_divisible(workload: &Workload, b: usize) -> Result<()> {
    if b == 0 || !workload.len().is_multiple_of(b) {
        return Err(Error::config(format!(
            "batch size {b} must divide the number of samples ({}) so every cell sees the same samples",
            workload.len()
        )));
    }
    Ok(())
}

fn oom_report(cfg: &RunConfig, workload: &Workload, predicted: usize) -> RunReport {
    RunReport {
        config: *cfg,
        status: RunStatus::Oom,
        num_samples: workload.len(),
        generated_tokens: 0,
        tokens_per_second: None,
        wall_secs: 0.0,
        prefill_secs: 0.0,
        decode_secs: 0.0,
        peak_kv_pairs: predicted,
        predicted_peak_kv_pairs: predicted,
        agreement_vs_fkv: None,
        mean_logit_divergence: None,
        mean_eviction_events_per_sample: 0.0,
        workload_digest: workload.digest.clone(),
        trace_digest: String::new(),
    }
}

/// Predicted per-cache peak for `cfg` on a workload whose longest prompt is `padded_len`.
pub fn predicted_peak(cfg: &RunConfig, padded_len: usize) -> Result<usize> {
    Ok(peak_kv_pairs(cfg.method, padded_len, cfg.effective_kvmax()?, cfg.max_gen))
}

/// Runs every batch of `workload` sequentially and times the whole pass.
///
/// With a `budget`, a batch size above the memory model's limit yields an OOM
/// report without running. Agreement is measured against `reference` when
/// given (it must use the same batch size); otherwise an FKV reference is
/// computed outside the timed region. Exactly `max_gen` tokens are generated
/// per sample.
pub fn measure_run<T: Scalar>(
    cfg: &RunConfig,
    workload: &Workload,
    weights: &ModelWeights<T>,
    budget: Option<&MemorySpec>,
    reference: Option<&FkvReference<T>>,
) -> Result<RunReport> {
    cfg.validate()?;
    if workload.is_empty() {
        return Err(Error::input("empty workload"));
    }
    let predicted = predicted_peak(cfg, workload.max_len())?;
    if let Some(spec) = budget {
        spec.validate()?;
        let fit = max_batch(spec, cfg.method, workload.max_len(), cfg.effective_kvmax()?, cfg.max_gen);
        if cfg.batch_size > fit {
            return Ok(oom_report(cfg, workload, predicted));
        }
    }
    check_divisible(workload, cfg.batch_size)?;
    if let Some(r) = reference {
        if r.batch_size != cfg.batch_size || r.tokens.len() != workload.len() {
            return Err(Error::input("FKV reference was built for a different batch partition"));
        }
    }

    let opts = RunOptions {
        keep_logits: true,
        ..Default::default()
    };
    let batches: Vec<_> = workload
        .batches(cfg.batch_size)
        .map(pad_batch)
        .collect::<Result<_>>()?;

    let mut tokens = Vec::with_capacity(workload.len());
    let mut logits = Vec::with_capacity(workload.len());
    let mut traces = Vec::with_capacity(batches.len());
    let (mut prefill, mut decode) = (0.0, 0.0);
    let mut eviction_sample_events = 0usize;

    let start = Instant::now();
    for batch in &batches {
        let g = generate(batch, cfg, weights, opts)?;
        prefill += g.timings.prefill_secs;
        decode += g.timings.decode_secs;
        eviction_sample_events += g.trace.eviction_count() * batch.len();
        tokens.extend(g.tokens);
        logits.extend(g.logits.expect("requested"));
        traces.push(g.trace);
    }
    let wall = start.elapsed().as_secs_f64();

    let generated: usize = tokens.iter().map(Vec::len).sum();
    debug_assert_eq!(generated, workload.len() * cfg.max_gen);
    let peak = traces.iter().map(|t| t.peak_kv_pairs_observed).max().unwrap_or(0);

    let (agreement, divergence) = match (cfg.method, reference) {
        (_, Some(r)) => (token_agreement(&tokens, &r.tokens), mean_abs_diff(&logits, &r.logits)),
        (Method::Fkv, None) => (1.0, 0.0),
        (_, None) => {
            let r = fkv_reference(workload, cfg, cfg.batch_size, weights)?;
            (token_agreement(&tokens, &r.tokens), mean_abs_diff(&logits, &r.logits))
        }
    };

    Ok(RunReport {
        config: *cfg,
        status: RunStatus::Ok,
        num_samples: workload.len(),
        generated_tokens: generated,
        tokens_per_second: Some(generated as f64 / wall.max(f64::MIN_POSITIVE)),
        wall_secs: wall,
        prefill_secs: prefill,
        decode_secs: decode,
        peak_kv_pairs: peak,
        predicted_peak_kv_pairs: predicted,
        agreement_vs_fkv: Some(agreement),
        mean_logit_divergence: Some(divergence),
        mean_eviction_events_per_sample: eviction_sample_events as f64 / workload.len() as f64,
        workload_digest: workload.digest.clone(),
        trace_digest: digest_traces(&traces, &tokens),
    })
}
