use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::Result;
use crate::scalar::Scalar;

/// Projection matrices of one decoder layer, stored `[in × out]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub wq: Vec<T>,
    pub wk: Vec<T>,
    pub wv: Vec<T>,
    pub wo: Vec<T>,
    pub w_up: Vec<T>,
    pub w_down: Vec<T>,
}

/// Seeded parameters of the toy transformer.
///
/// Entries are drawn from `U(-1, 1)` by a ChaCha8 stream seeded with `seed` and
/// scaled by `1/sqrt(fan_in)`; the embedding table uses `fan_in = 1`. Draw order
/// is: embedding, then per layer `wq, wk, wv, wo, w_up, w_down`, then the output
/// projection. Values are drawn in `f64` and rounded to `T`, so the `f32` and
/// `f64` models share the same parameters up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub config: ModelConfig,
    pub seed: u64,
    /// `[vocab × hidden]`.
    pub embedding: Vec<T>,
    pub layers: Vec<LayerWeights<T>>,
    /// `[hidden × vocab]`.
    pub unembed: Vec<T>,
    /// Sinusoidal table `[max_position × hidden]`, added to token embeddings.
    pub positional: Vec<T>,
}

fn draw<T: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, len: usize) -> Vec<T> {
    let scale = 1.0 / (fan_in as f64).sqrt();
    (0..len)
        .map(|_| T::from_f64_lossy(rng.gen_range(-1.0..1.0) * scale))
        .collect()
}

fn sinusoid_table<T: Scalar>(positions: usize, width: usize) -> Vec<T> {
    let mut table = Vec::with_capacity(positions * width);
    for pos in 0..positions {
        for i in 0..width {
            let pair = (i / 2) as f64;
            let freq = 10_000f64.powf(-2.0 * pair / width as f64);
            let angle = pos as f64 * freq;
            let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            table.push(T::from_f64_lossy(v));
        }
    }
    table
}

/// Generates the weights for `config` deterministically from `seed`.
pub fn init_model<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelWeights<T>> {
    config.validate()?;
    let hidden = config.hidden_dim();
    let ffn = config.ffn_dim;
    let vocab = config.vocab_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let embedding = draw(&mut rng, 1, vocab * hidden);
    let layers = (0..config.num_layers)
        .map(|_| LayerWeights {
            wq: draw(&mut rng, hidden, hidden * hidden),
            wk: draw(&mut rng, hidden, hidden * hidden),
            wv: draw(&mut rng, hidden, hidden * hidden),
            wo: draw(&mut rng, hidden, hidden * hidden),
            w_up: draw(&mut rng, hidden, hidden * ffn),
            w_down: draw(&mut rng, ffn, ffn * hidden),
        })
        .collect();
    let unembed = draw(&mut rng, hidden, hidden * vocab);
    let positional = sinusoid_table(config.max_position, hidden);

    Ok(ModelWeights {
        config: *config,
        seed,
        embedding,
        layers,
        unembed,
        positional,
    })
}

impl<T: Scalar> ModelWeights<T> {
    /// Embedding plus positional encoding for `token` at `position`.
    pub fn embed(&self, token: u32, position: usize) -> Vec<T> {
        let hidden = self.config.hidden_dim();
        let t = token as usize;
        let e = &self.embedding[t * hidden..(t + 1) * hidden];
        let p = &self.positional[position * hidden..(position + 1) * hidden];
        e.iter().zip(p).map(|(&a, &b)| a + b).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn small() -> ModelConfig {
        ModelConfig::new(2, 2, 4, 16, 32)
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = init_model::<f32>(&small(), 0).unwrap();
        let b = init_model::<f32>(&small(), 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seed_differs() {
        let a = init_model::<f32>(&small(), 0).unwrap();
        let b = init_model::<f32>(&small(), 1).unwrap();
        assert_ne!(a.embedding, b.embedding);
    }

    #[test]
    fn embedding_shape() {
        let cfg = ModelConfig::new(4, 4, 8, 256, 16);
        let w = init_model::<f64>(&cfg, 7).unwrap();
        assert_eq!(w.embedding.len(), 256 * 32);
        assert_eq!(w.layers.len(), 4);
        assert_eq!(w.layers[0].w_up.len(), 32 * 128);
        assert_eq!(w.unembed.len(), 32 * 256);
    }

    #[test]
    fn magnitudes_respect_fan_in() {
        let cfg = ModelConfig::new(1, 4, 8, 16, 8);
        let w = init_model::<f64>(&cfg, 3).unwrap();
        let bound = 1.0 / (32f64).sqrt();
        assert!(w.layers[0].wq.iter().all(|v| v.abs() <= bound));
        assert!(w.embedding.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = ModelConfig::new(1, 1, 1, 2, 8);
        assert!(matches!(init_model::<f32>(&cfg, 0), Err(Error::Config(_))));
    }
}
