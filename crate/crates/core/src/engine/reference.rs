//! Dense recompute oracle: no cache, the whole sequence is rerun every step.
//!
//! Written against the raw weights with its own loops so it shares no code
//! path with the cached forward pass beyond the parameter layout.

use crate::error::{Error, Result};
use crate::model::{greedy_next, ModelWeights, TokenId};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOutput<T> {
    pub tokens: Vec<TokenId>,
    /// Logits each token was chosen from, `[max_gen][vocab]`.
    pub logits: Vec<Vec<T>>,
}

fn matvec<T: Scalar>(x: &[T], w: &[T], out_dim: usize) -> Vec<T> {
    (0..out_dim)
        .map(|j| {
            let mut acc = T::zero();
            for (k, &xk) in x.iter().enumerate() {
                acc += xk * w[k * out_dim + j];
            }
            acc
        })
        .collect()
}

fn normalize<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut sq = T::zero();
    for &v in x {
        sq += v * v;
    }
    let eps = T::from_f64_lossy(1e-5);
    let d = (sq / T::from_count(x.len()) + eps).sqrt();
    x.iter().map(|&v| v / d).collect()
}

/// Logits at the last position of `seq`, computed from scratch.
pub fn dense_logits<T: Scalar>(weights: &ModelWeights<T>, seq: &[TokenId]) -> Vec<T> {
    let cfg = &weights.config;
    let hidden = cfg.hidden_dim();
    let hd = cfg.head_dim;
    let n = seq.len();
    let scale = T::one() / T::from_count(hd).sqrt();

    let mut xs: Vec<Vec<T>> = seq.iter().enumerate().map(|(pos, &t)| weights.embed(t, pos)).collect();
    for lw in &weights.layers {
        let normed: Vec<Vec<T>> = xs.iter().map(|x| normalize(x)).collect();
        let qs: Vec<Vec<T>> = normed.iter().map(|h| matvec(h, &lw.wq, hidden)).collect();
        let ks: Vec<Vec<T>> = normed.iter().map(|h| matvec(h, &lw.wk, hidden)).collect();
        let vs: Vec<Vec<T>> = normed.iter().map(|h| matvec(h, &lw.wv, hidden)).collect();
        for i in 0..n {
            let mut mixed = vec![T::zero(); hidden];
            for head in 0..cfg.num_heads {
                let c = head * hd;
                let scores: Vec<T> = (0..=i)
                    .map(|j| {
                        let mut s = T::zero();
                        for d in 0..hd {
                            s += qs[i][c + d] * ks[j][c + d];
                        }
                        s * scale
                    })
                    .collect();
                let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
                let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
                let mut total = T::zero();
                for &e in &exps {
                    total += e;
                }
                for (j, &e) in exps.iter().enumerate() {
                    let w = e / total;
                    for d in 0..hd {
                        mixed[c + d] += w * vs[j][c + d];
                    }
                }
            }
            let o = matvec(&mixed, &lw.wo, hidden);
            for (x, v) in xs[i].iter_mut().zip(o) {
                *x += v;
            }
            let h2 = normalize(&xs[i]);
            let up: Vec<T> = matvec(&h2, &lw.w_up, cfg.ffn_dim)
                .into_iter()
                .map(|u| u / (T::one() + (-u).exp()))
                .collect();
            let down = matvec(&up, &lw.w_down, hidden);
            for (x, v) in xs[i].iter_mut().zip(down) {
                *x += v;
            }
        }
    }
    let last = normalize(&xs[n - 1]);
    matvec(&last, &weights.unembed, cfg.vocab_size)
}

/// Greedy generation of `max_gen` tokens by full recomputation each step.
pub fn full_attention_reference<T: Scalar>(
    prompt: &[TokenId],
    max_gen: usize,
    weights: &ModelWeights<T>,
) -> Result<ReferenceOutput<T>> {
    if prompt.is_empty() {
        return Err(Error::input("empty prompt"));
    }
    if prompt.len() + max_gen - 1 > weights.config.max_position {
        return Err(Error::config("sequence exceeds max_position"));
    }
    let mut seq = prompt.to_vec();
    let mut tokens = Vec::with_capacity(max_gen);
    let mut logits = Vec::with_capacity(max_gen);
    for _ in 0..max_gen {
        let l = dense_logits(weights, &seq);
        let next = greedy_next(&l);
        tokens.push(next);
        seq.push(next);
        logits.push(l);
    }
    Ok(ReferenceOutput { tokens, logits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};

    #[test]
    fn one_token_prompt_one_step() {
        let cfg = ModelConfig::new(1, 1, 4, 8, 8);
        let w = init_model::<f64>(&cfg, 11).unwrap();
        let out = full_attention_reference(&[1], 1, &w).unwrap();
        assert_eq!(out.tokens, vec![greedy_next(&dense_logits(&w, &[1]))]);
    }
}
