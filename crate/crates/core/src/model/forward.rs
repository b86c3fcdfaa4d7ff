use super::attention::{attention_forward, AttentionWeights};
use super::config::TokenId;
use super::linalg::{matmul, rms_norm_rows, silu};
use super::weights::ModelWeights;
use crate::error::{Error, Result};
use crate::kv_cache::KvCache;
use crate::scalar::Scalar;

/// One [`KvCache`] per (layer, sample, head), all sharing a cap.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheSet<T> {
    num_layers: usize,
    batch_size: usize,
    num_heads: usize,
    caches: Vec<KvCache<T>>,
}

impl<T: Scalar> CacheSet<T> {
    pub fn new(
        num_layers: usize,
        batch_size: usize,
        num_heads: usize,
        head_dim: usize,
        capacity: usize,
    ) -> Self {
        let n = num_layers * batch_size * num_heads;
        Self {
            num_layers,
            batch_size,
            num_heads,
            caches: (0..n).map(|_| KvCache::new(head_dim, capacity)).collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn index(&self, layer: usize, sample: usize, head: usize) -> usize {
        (layer * self.batch_size + sample) * self.num_heads + head
    }

    pub fn get(&self, layer: usize, sample: usize, head: usize) -> &KvCache<T> {
        &self.caches[self.index(layer, sample, head)]
    }

    pub fn get_mut(&mut self, layer: usize, sample: usize, head: usize) -> &mut KvCache<T> {
        let i = self.index(layer, sample, head);
        &mut self.caches[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &KvCache<T>> {
        self.caches.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut KvCache<T>> {
        self.caches.iter_mut()
    }

    /// `(layer, sample, head)` coordinates alongside each cache.
    pub fn iter_indexed_mut(
        &mut self,
    ) -> impl Iterator<Item = ((usize, usize, usize), &mut KvCache<T>)> {
        let (b, h) = (self.batch_size, self.num_heads);
        self.caches
            .iter_mut()
            .enumerate()
            .map(move |(i, c)| ((i / (b * h), (i / h) % b, i % h), c))
    }

    pub fn max_len(&self) -> usize {
        self.caches.iter().map(KvCache::len).max().unwrap_or(0)
    }

    pub fn min_len(&self) -> usize {
        self.caches.iter().map(KvCache::len).min().unwrap_or(0)
    }

    /// Retained pair count when every cache holds the same number, else `None`.
    pub fn uniform_len(&self) -> Option<usize> {
        let max = self.max_len();
        (self.min_len() == max).then_some(max)
    }
}

/// Result of one batched forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutput<T> {
    /// Logits of each sample's last block position, `[batch][vocab]`.
    pub logits: Vec<Vec<T>>,
    /// Attention weights per cache, indexed like [`CacheSet::index`]; only
    /// filled when requested.
    pub attention: Option<Vec<AttentionWeights<T>>>,
}

fn check_block<T: Scalar>(
    weights: &ModelWeights<T>,
    token_ids: &[Vec<TokenId>],
    position_ids: &[usize],
    pad_mask: &[Vec<bool>],
    caches: &CacheSet<T>,
) -> Result<()> {
    let cfg = &weights.config;
    let block = position_ids.len();
    if block == 0 {
        return Err(Error::input("empty block"));
    }
    if token_ids.len() != caches.batch_size() || pad_mask.len() != caches.batch_size() {
        return Err(Error::dimension(format!(
            "block has {} token rows and {} mask rows for a batch of {}",
            token_ids.len(),
            pad_mask.len(),
            caches.batch_size()
        )));
    }
    if caches.num_layers() != cfg.num_layers || caches.num_heads() != cfg.num_heads {
        return Err(Error::dimension("cache set does not match model layers/heads"));
    }
    for (row, mask) in token_ids.iter().zip(pad_mask) {
        if row.len() != block || mask.len() != block {
            return Err(Error::dimension("token or mask row length differs from position ids"));
        }
        if let Some(&t) = row.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::input(format!("token {t} outside vocabulary of {}", cfg.vocab_size)));
        }
    }
    if position_ids.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::contract("position ids must be strictly increasing"));
    }
    let last = position_ids[block - 1];
    if last >= cfg.max_position {
        return Err(Error::config(format!(
            "position {last} exceeds max_position {}",
            cfg.max_position
        )));
    }
    for cache in caches.iter() {
        if cache.len() + block > cache.capacity() {
            return Err(Error::Capacity {
                len: cache.len(),
                incoming: block,
                capacity: cache.capacity(),
            });
        }
        if cache.kv_ids().last().is_some_and(|&id| id >= position_ids[0]) {
            return Err(Error::contract("block positions must follow every cached kv id"));
        }
    }
    Ok(())
}

/// Runs one block of tokens through the model.
///
/// The block's KV pairs are appended to every cache before attention, so each
/// query sees the retained history plus its own causal prefix of the block.
/// Attention weights are accumulated into each cache's statistics. The call is
/// all-or-nothing: inputs are checked before any cache is touched.
pub fn forward_block<T: Scalar>(
    weights: &ModelWeights<T>,
    token_ids: &[Vec<TokenId>],
    position_ids: &[usize],
    pad_mask: &[Vec<bool>],
    caches: &mut CacheSet<T>,
    collect_attention: bool,
) -> Result<BlockOutput<T>> {
    check_block(weights, token_ids, position_ids, pad_mask, caches)?;
    let cfg = &weights.config;
    let hidden = cfg.hidden_dim();
    let hd = cfg.head_dim;
    let block = position_ids.len();
    let batch = token_ids.len();
    let rows = batch * block;

    let mut x = Vec::with_capacity(rows * hidden);
    for row in token_ids {
        for (&tok, &pos) in row.iter().zip(position_ids) {
            x.extend(weights.embed(tok, pos));
        }
    }

    let mut attention = collect_attention.then(Vec::new);
    let mut q_blk = vec![T::zero(); block * hd];
    let mut k_blk = vec![T::zero(); block * hd];
    let mut v_blk = vec![T::zero(); block * hd];

    for (l, lw) in weights.layers.iter().enumerate() {
        let h = rms_norm_rows(&x, hidden);
        let q = matmul(&h, rows, hidden, &lw.wq, hidden);
        let k = matmul(&h, rows, hidden, &lw.wk, hidden);
        let v = matmul(&h, rows, hidden, &lw.wv, hidden);

        let mut mixed = vec![T::zero(); rows * hidden];
        for (s, sample_mask) in pad_mask.iter().enumerate() {
            for head in 0..cfg.num_heads {
                let col = head * hd;
                for i in 0..block {
                    let src = (s * block + i) * hidden + col;
                    q_blk[i * hd..(i + 1) * hd].copy_from_slice(&q[src..src + hd]);
                    k_blk[i * hd..(i + 1) * hd].copy_from_slice(&k[src..src + hd]);
                    v_blk[i * hd..(i + 1) * hd].copy_from_slice(&v[src..src + hd]);
                }
                let cache = caches.get_mut(l, s, head);
                let offset = cache.len();
                cache.append_masked(&k_blk, &v_blk, position_ids, sample_mask)?;
                let res = attention_forward(
                    &q_blk,
                    cache.keys(),
                    cache.values(),
                    hd,
                    offset,
                    cache.masked(),
                    &pad_mask[s],
                )?;
                cache.record_attention(&res.attn_weights)?;
                for i in 0..block {
                    let dst = (s * block + i) * hidden + col;
                    mixed[dst..dst + hd].copy_from_slice(&res.outputs[i * hd..(i + 1) * hd]);
                }
                if let Some(a) = attention.as_mut() {
                    a.push(res.attn_weights);
                }
            }
        }

        let o = matmul(&mixed, rows, hidden, &lw.wo, hidden);
        for (xv, ov) in x.iter_mut().zip(&o) {
            *xv += *ov;
        }
        let h2 = rms_norm_rows(&x, hidden);
        let mut up = matmul(&h2, rows, hidden, &lw.w_up, cfg.ffn_dim);
        for u in up.iter_mut() {
            *u = silu(*u);
        }
        let down = matmul(&up, rows, cfg.ffn_dim, &lw.w_down, hidden);
        for (xv, dv) in x.iter_mut().zip(&down) {
            *xv += *dv;
        }
    }

    let mut last = Vec::with_capacity(batch * hidden);
    for s in 0..batch {
        let r = s * block + block - 1;
        last.extend_from_slice(&x[r * hidden..(r + 1) * hidden]);
    }
    let normed = rms_norm_rows(&last, hidden);
    let logits = matmul(&normed, batch, hidden, &weights.unembed, cfg.vocab_size);
    Ok(BlockOutput {
        logits: logits.chunks(cfg.vocab_size).map(<[T]>::to_vec).collect(),
        attention,
    })
}

/// Index of the largest logit; ties resolve to the lowest token id.
pub fn greedy_next<T: Scalar>(logits: &[T]) -> TokenId {
    let mut best = 0usize;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best as TokenId
}

pub fn greedy_batch<T: Scalar>(logits: &[Vec<T>]) -> Vec<TokenId> {
    logits.iter().map(|l| greedy_next(l)).collect()
}
