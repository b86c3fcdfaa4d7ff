//! Per-(layer, head, sample) KV storage and the three eviction policies.
//!
//! Every retained pair carries the position id it was generated from and an
//! accumulator of the attention it has received. Average-attention eviction
//! divides that accumulator by the number of queries that could have attended
//! to the pair, `curr_id + 1 - kv_id`, and drops the smallest. Ties go to the
//! older pair (smaller `kv_id`).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AttentionWeights;
use crate::scalar::Scalar;

/// Which rule decides the pairs to drop once a cache reaches its cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvictionPolicy {
    /// Remove the `p` pairs with the smallest average attention.
    AverageAttention { p: usize },
    /// Keep only the most recent pair.
    MostRecentOnly,
    /// Never evict.
    NoEviction,
}

impl EvictionPolicy {
    pub fn validate(&self, kvmax: usize) -> Result<()> {
        match *self {
            Self::AverageAttention { p } if p == 0 || p >= kvmax => Err(Error::config(format!(
                "average-attention eviction needs 1 <= p < kvmax, got p={p}, kvmax={kvmax}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictionTrigger {
    PrefillBlock,
    DecodeStep,
}

/// Pairs removed by a single eviction call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evicted {
    pub kv_ids: Vec<usize>,
    pub len_before: usize,
    pub len_after: usize,
}

impl Evicted {
    pub fn into_event(self, trigger: EvictionTrigger, step_index: usize) -> EvictionEvent {
        EvictionEvent {
            trigger,
            step_index,
            evicted_kv_ids: self.kv_ids,
            cache_len_before: self.len_before,
            cache_len_after: self.len_after,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvictionEvent {
    pub trigger: EvictionTrigger,
    pub step_index: usize,
    pub evicted_kv_ids: Vec<usize>,
    pub cache_len_before: usize,
    pub cache_len_after: usize,
}

/// Retained keys/values of one (layer, head, sample) plus eviction statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct KvCache<T> {
    head_dim: usize,
    capacity: usize,
    keys: Vec<T>,
    values: Vec<T>,
    kv_ids: Vec<usize>,
    sum_weights: Vec<T>,
    masked: Vec<bool>,
}

impl<T: Scalar> KvCache<T> {
    /// Empty cache holding at most `capacity` pairs.
    pub fn new(head_dim: usize, capacity: usize) -> Self {
        Self {
            head_dim,
            capacity,
            keys: Vec::new(),
            values: Vec::new(),
            kv_ids: Vec::new(),
            sum_weights: Vec::new(),
            masked: Vec::new(),
        }
    }

    pub fn unbounded(head_dim: usize) -> Self {
        Self::new(head_dim, usize::MAX)
    }

    pub fn len(&self) -> usize {
        self.kv_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kv_ids.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.capacity
    }

    /// `[len × head_dim]`.
    pub fn keys(&self) -> &[T] {
        &self.keys
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn kv_ids(&self) -> &[usize] {
        &self.kv_ids
    }

    pub fn sum_weights(&self) -> &[T] {
        &self.sum_weights
    }

    /// Attention mask of the retained pairs (`true` for pad slots).
    pub fn masked(&self) -> &[bool] {
        &self.masked
    }

    /// Appends unmasked pairs with zeroed statistics.
    pub fn append(&mut self, new_keys: &[T], new_values: &[T], new_kv_ids: &[usize]) -> Result<()> {
        let mask = vec![false; new_kv_ids.len()];
        self.append_masked(new_keys, new_values, new_kv_ids, &mask)
    }

    /// Appends pairs, marking those with `masked[i]` as pad slots.
    pub fn append_masked(
        &mut self,
        new_keys: &[T],
        new_values: &[T],
        new_kv_ids: &[usize],
        masked: &[bool],
    ) -> Result<()> {
        let n = new_kv_ids.len();
        if new_keys.len() != n * self.head_dim
            || new_values.len() != n * self.head_dim
            || masked.len() != n
        {
            return Err(Error::dimension(format!(
                "append of {n} ids with {} key and {} value elements (head_dim {})",
                new_keys.len(),
                new_values.len(),
                self.head_dim
            )));
        }
        if self.len() + n > self.capacity {
            return Err(Error::Capacity {
                len: self.len(),
                incoming: n,
                capacity: self.capacity,
            });
        }
        let mut last = self.kv_ids.last().copied();
        for &id in new_kv_ids {
            if last.is_some_and(|l| id <= l) {
                return Err(Error::contract(format!(
                    "kv ids must be strictly increasing, got {id} after {}",
                    last.unwrap_or_default()
                )));
            }
            last = Some(id);
        }
        self.keys.extend_from_slice(new_keys);
        self.values.extend_from_slice(new_values);
        self.kv_ids.extend_from_slice(new_kv_ids);
        self.sum_weights.extend(std::iter::repeat_n(T::zero(), n));
        self.masked.extend_from_slice(masked);
        Ok(())
    }

    /// Adds every row of `block` into `sum_weights`. Row `i` covers the first
    /// `row_len(i)` retained pairs; pairs past the end of a row get nothing.
    pub fn record_attention(&mut self, block: &AttentionWeights<T>) -> Result<()> {
        for row in block.rows() {
            self.record_row(row)?;
        }
        Ok(())
    }

    pub fn record_row(&mut self, row: &[T]) -> Result<()> {
        if row.len() > self.len() {
            return Err(Error::contract(format!(
                "attention row of length {} exceeds cache length {}",
                row.len(),
                self.len()
            )));
        }
        for (acc, &w) in self.sum_weights.iter_mut().zip(row) {
            *acc += w;
        }
        Ok(())
    }

    /// `sum_weights / (curr_id + 1 - kv_ids)`, element-wise.
    pub fn ave_weights(&self, curr_id: usize) -> Result<Vec<T>> {
        if let Some(&max_id) = self.kv_ids.last() {
            if curr_id < max_id {
                return Err(Error::contract(format!(
                    "curr_id {curr_id} precedes retained kv id {max_id}"
                )));
            }
        }
        Ok(self
            .sum_weights
            .iter()
            .zip(&self.kv_ids)
            .map(|(&s, &id)| s / T::from_count(curr_id + 1 - id))
            .collect())
    }

    /// Retained indices ordered by eviction priority: smallest average first,
    /// smaller kv id first among equals.
    pub fn eviction_order(&self, curr_id: usize) -> Result<Vec<usize>> {
        let ave = self.ave_weights(curr_id)?;
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            ave[a]
                .partial_cmp(&ave[b])
                .unwrap_or(Ordering::Equal)
                .then(self.kv_ids[a].cmp(&self.kv_ids[b]))
        });
        Ok(order)
    }

    /// Removes the `p` pairs with the smallest average attention at `curr_id`.
    pub fn evict_smallest(&mut self, p: usize, curr_id: usize) -> Result<Evicted> {
        if p > self.len() {
            return Err(Error::contract(format!(
                "cannot evict {p} pairs from a cache of {}",
                self.len()
            )));
        }
        let order = self.eviction_order(curr_id)?;
        let mut drop = vec![false; self.len()];
        for &i in &order[..p] {
            drop[i] = true;
        }
        Ok(self.remove_where(&drop))
    }

    /// Removes every pair except the one with the largest kv id.
    pub fn evict_all_but_most_recent(&mut self) -> Result<Evicted> {
        if self.is_empty() {
            return Err(Error::contract("cannot collapse an empty cache"));
        }
        let mut drop = vec![true; self.len()];
        *drop.last_mut().expect("non-empty") = false;
        Ok(self.remove_where(&drop))
    }

    /// Removes every pair whose kv id satisfies `pred`.
    pub fn evict_where(&mut self, pred: impl Fn(usize) -> bool) -> Evicted {
        let drop: Vec<bool> = self.kv_ids.iter().map(|&id| pred(id)).collect();
        self.remove_where(&drop)
    }

    fn remove_where(&mut self, drop: &[bool]) -> Evicted {
        let len_before = self.len();
        let hd = self.head_dim;
        let mut evicted = Vec::new();
        let mut w = 0;
        for (r, &gone) in drop.iter().enumerate() {
            if gone {
                evicted.push(self.kv_ids[r]);
                continue;
            }
            if w != r {
                self.keys.copy_within(r * hd..(r + 1) * hd, w * hd);
                self.values.copy_within(r * hd..(r + 1) * hd, w * hd);
                self.kv_ids[w] = self.kv_ids[r];
                self.sum_weights[w] = self.sum_weights[r];
                self.masked[w] = self.masked[r];
            }
            w += 1;
        }
        self.keys.truncate(w * hd);
        self.values.truncate(w * hd);
        self.kv_ids.truncate(w);
        self.sum_weights.truncate(w);
        self.masked.truncate(w);
        Evicted {
            kv_ids: evicted,
            len_before,
            len_after: w,
        }
    }

    /// Number of bytes the retained pairs would occupy at `dtype_bytes` per element.
    pub fn resident_bytes(&self, dtype_bytes: usize) -> usize {
        2 * self.len() * self.head_dim * dtype_bytes
    }
}
