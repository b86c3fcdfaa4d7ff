use super::linalg::dot;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Post-softmax weights of one attention block for a single (layer, head, sample).
///
/// Row `i` covers the `causal_offset + i + 1` cache entries visible to query `i`,
/// in cache order. Rows are packed back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights<T> {
    causal_offset: usize,
    block_len: usize,
    data: Vec<T>,
}

impl<T: Scalar> AttentionWeights<T> {
    pub fn new(causal_offset: usize, block_len: usize) -> Self {
        let total = block_len * causal_offset + block_len * (block_len + 1) / 2;
        Self {
            causal_offset,
            block_len,
            data: vec![T::zero(); total],
        }
    }

    /// Builds a block from explicit rows; row `i` must have length `causal_offset + i + 1`.
    pub fn from_rows(causal_offset: usize, rows: &[Vec<T>]) -> Result<Self> {
        let mut w = Self::new(causal_offset, rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != w.row_len(i) {
                return Err(Error::dimension(format!(
                    "row {i} has length {}, expected {}",
                    row.len(),
                    w.row_len(i)
                )));
            }
            w.row_mut(i).copy_from_slice(row);
        }
        Ok(w)
    }

    pub fn causal_offset(&self) -> usize {
        self.causal_offset
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.causal_offset + i + 1
    }

    fn row_start(&self, i: usize) -> usize {
        i * self.causal_offset + i * (i + 1) / 2
    }

    pub fn row(&self, i: usize) -> &[T] {
        let s = self.row_start(i);
        &self.data[s..s + self.row_len(i)]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [T] {
        let s = self.row_start(i);
        let len = self.row_len(i);
        &mut self.data[s..s + len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        (0..self.block_len).map(move |i| self.row(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlockResult<T> {
    /// `[block_len × head_dim]`.
    pub outputs: Vec<T>,
    pub attn_weights: AttentionWeights<T>,
}

/// Scaled dot-product attention of a block of queries over one head's cache.
///
/// `keys`/`values` hold the retained entries (`[cache_len × head_dim]`), the
/// last `block_len` of which may belong to the block itself; query `i` sees
/// entries `0..causal_offset + i + 1`. Entries with `key_masked[j]` get weight
/// exactly zero. A query with `query_masked[i]` (a pad slot) produces a zero row
/// and a zero output; every other row sums to one.
pub fn attention_forward<T: Scalar>(
    queries: &[T],
    keys: &[T],
    values: &[T],
    head_dim: usize,
    causal_offset: usize,
    key_masked: &[bool],
    query_masked: &[bool],
) -> Result<AttentionBlockResult<T>> {
    if head_dim == 0 || !queries.len().is_multiple_of(head_dim) || !keys.len().is_multiple_of(head_dim) {
        return Err(Error::dimension("query/key buffers are not a multiple of head_dim"));
    }
    let block_len = queries.len() / head_dim;
    let cache_len = keys.len() / head_dim;
    if values.len() != keys.len() || key_masked.len() != cache_len {
        return Err(Error::dimension(format!(
            "cache view has {cache_len} keys, {} values, {} mask entries",
            values.len() / head_dim,
            key_masked.len()
        )));
    }
    if query_masked.len() != block_len {
        return Err(Error::dimension("query mask length differs from block length"));
    }
    if causal_offset + block_len > cache_len {
        return Err(Error::dimension(format!(
            "block of {block_len} queries after {causal_offset} entries needs {} cache entries, have {cache_len}",
            causal_offset + block_len
        )));
    }

    let scale = T::one() / T::from_count(head_dim).sqrt();
    let mut weights = AttentionWeights::new(causal_offset, block_len);
    let mut outputs = vec![T::zero(); block_len * head_dim];

    for i in 0..block_len {
        if query_masked[i] {
            continue;
        }
        let q = &queries[i * head_dim..(i + 1) * head_dim];
        let row = weights.row_mut(i);
        let mut max = T::neg_infinity();
        for (j, w) in row.iter_mut().enumerate() {
            if key_masked[j] {
                continue;
            }
            let s = dot(q, &keys[j * head_dim..(j + 1) * head_dim]) * scale;
            *w = s;
            if s > max {
                max = s;
            }
        }
        if max == T::neg_infinity() {
            // every visible entry is masked
            continue;
        }
        let mut total = T::zero();
        for (j, w) in row.iter_mut().enumerate() {
            if key_masked[j] {
                continue;
            }
            *w = (*w - max).exp();
            total += *w;
        }
        let out = &mut outputs[i * head_dim..(i + 1) * head_dim];
        for (j, w) in row.iter_mut().enumerate() {
            if key_masked[j] {
                continue;
            }
            *w = *w / total;
            let v = &values[j * head_dim..(j + 1) * head_dim];
            for (o, &x) in out.iter_mut().zip(v) {
                *o += *w * x;
            }
        }
    }

    Ok(AttentionBlockResult {
        outputs,
        attn_weights: weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar softmax over explicit score lists, used as the reference.
    fn reference_softmax(scores: &[f64]) -> Vec<f64> {
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }

    #[test]
    fn singleton_row_is_one() {
        let r = attention_forward(&[0.3f32, -1.0], &[0.5, 0.5], &[2.0, 3.0], 2, 0, &[false], &[false])
            .unwrap();
        assert_eq!(r.attn_weights.row(0), &[1.0]);
        assert_eq!(r.outputs, vec![2.0, 3.0]);
    }

    #[test]
    fn masked_pads_get_zero_weight() {
        let keys = [1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0];
        let values = [9.0, 9.0, 9.0, 9.0, 1.0, -1.0];
        let r = attention_forward(&[1.0, 2.0], &keys, &values, 2, 2, &[true, true, false], &[false])
            .unwrap();
        assert_eq!(r.attn_weights.row(0), &[0.0, 0.0, 1.0]);
        assert_eq!(r.outputs, vec![1.0, -1.0]);
    }

    #[test]
    fn causal_block_over_empty_prior_cache() {
        let q = [0.2f64, -0.4, 1.1, 0.3];
        let k = [0.5, 0.1, -0.7, 0.9];
        let v = [1.0, 2.0, 3.0, 4.0];
        let r = attention_forward(&q, &k, &v, 2, 0, &[false, false], &[false, false]).unwrap();
        assert_eq!(r.attn_weights.row(0).len(), 1);
        assert_eq!(r.attn_weights.row(1).len(), 2);

        let scale = 1.0 / 2f64.sqrt();
        let s10 = (1.1 * 0.5 + 0.3 * 0.1) * scale;
        let s11 = (1.1 * -0.7 + 0.3 * 0.9) * scale;
        let expect = reference_softmax(&[s10, s11]);
        for (got, want) in r.attn_weights.row(1).iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12);
        }
        for row in r.attn_weights.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
        let out1 = [expect[0] * 1.0 + expect[1] * 3.0, expect[0] * 2.0 + expect[1] * 4.0];
        assert!((r.outputs[2] - out1[0]).abs() < 1e-12);
        assert!((r.outputs[3] - out1[1]).abs() < 1e-12);
    }

    #[test]
    fn masked_query_yields_zero_row() {
        let r = attention_forward(
            &[1.0f32, 1.0],
            &[1.0, 1.0],
            &[1.0, 1.0],
            1,
            0,
            &[true, false],
            &[true, false],
        )
        .unwrap();
        assert_eq!(r.attn_weights.row(0), &[0.0]);
        assert_eq!(r.attn_weights.row(1), &[0.0, 1.0]);
        assert_eq!(r.outputs[0], 0.0);
    }

    #[test]
    fn equal_scores_give_uniform_rows() {
        // zero queries make every score equal
        let cache_len = 6;
        let block = 3;
        let hd = 4;
        let q = vec![0.0f64; block * hd];
        let k: Vec<f64> = (0..cache_len * hd).map(|i| (i as f64).sin()).collect();
        let v = k.clone();
        let offset = cache_len - block;
        let r = attention_forward(&q, &k, &v, hd, offset, &[false; 6], &[false; 3]).unwrap();
        for (i, row) in r.attn_weights.rows().enumerate() {
            let visible = offset + i + 1;
            for &w in row {
                assert!((w - 1.0 / visible as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = attention_forward(&[1.0f32, 1.0], &[1.0, 1.0], &[1.0], 2, 0, &[false], &[false]);
        assert!(matches!(err, Err(Error::Dimension(_))));
        let err = attention_forward(&[1.0f32, 1.0], &[1.0, 1.0], &[1.0, 1.0], 2, 1, &[false], &[false]);
        assert!(matches!(err, Err(Error::Dimension(_))));
    }
}
