use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token id type of the toy vocabulary.
pub type TokenId = u32;

/// Left-padding token. Its KV pairs are attention-masked.
pub const PAD_TOKEN: TokenId = 0;
/// Beginning-of-sequence token; generated workloads start every prompt with it.
pub const BOS_TOKEN: TokenId = 1;
/// First id usable as ordinary content.
pub const FIRST_CONTENT_TOKEN: TokenId = 2;

/// Dimensions of the toy decoder-only transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    /// Width of the feed-forward hidden layer.
    pub ffn_dim: usize,
    pub vocab_size: usize,
    /// Bytes per stored element. Only the memory model reads this.
    pub dtype_bytes: usize,
    /// Largest position id (exclusive) the positional table covers.
    pub max_position: usize,
}

impl ModelConfig {
    /// Builds a config with `ffn_dim = 4 × hidden_dim`.
    pub fn new(
        num_layers: usize,
        num_heads: usize,
        head_dim: usize,
        vocab_size: usize,
        max_position: usize,
    ) -> Self {
        Self {
            num_layers,
            num_heads,
            head_dim,
            ffn_dim: 4 * num_heads * head_dim,
            vocab_size,
            dtype_bytes: 4,
            max_position,
        }
    }

    /// `num_heads × head_dim`.
    pub fn hidden_dim(&self) -> usize {
        self.num_heads * self.head_dim
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("ffn_dim", self.ffn_dim),
            ("dtype_bytes", self.dtype_bytes),
            ("max_position", self.max_position),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if self.vocab_size < 4 {
            return Err(Error::config(format!(
                "vocab_size must be at least 4 (pad, bos and two content tokens), got {}",
                self.vocab_size
            )));
        }
        if self.vocab_size > TokenId::MAX as usize {
            return Err(Error::config("vocab_size does not fit the token id type"));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::new(4, 4, 32, 256, 4096)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hidden_is_heads_times_head_dim() {
        let c = ModelConfig::new(4, 4, 8, 256, 64);
        assert_eq!(c.hidden_dim(), 32);
        assert_eq!(c.ffn_dim, 128);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_degenerate_configs() {
        let mut c = ModelConfig::new(1, 1, 1, 4, 8);
        assert!(c.validate().is_ok());
        c.vocab_size = 3;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ModelConfig::new(0, 1, 1, 16, 8);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ModelConfig::new(1, 1, 0, 16, 8);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
