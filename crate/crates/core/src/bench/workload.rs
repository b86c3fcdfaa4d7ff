use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{TokenId, BOS_TOKEN, FIRST_CONTENT_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LengthDistribution {
    Fixed { len: usize },
    /// Inclusive on both ends.
    Uniform { lo: usize, hi: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub num_samples: usize,
    pub lengths: LengthDistribution,
    /// Prompts longer than this are truncated.
    pub max_input_len: usize,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            num_samples: 8,
            lengths: LengthDistribution::Fixed { len: 512 },
            max_input_len: 3584,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::config("workload needs at least one sample"));
        }
        if self.max_input_len == 0 {
            return Err(Error::config("max_input_len must be at least 1"));
        }
        match self.lengths {
            LengthDistribution::Fixed { len: 0 } => Err(Error::config("prompt length must be at least 1")),
            LengthDistribution::Uniform { lo, hi } if lo == 0 || lo > hi => Err(Error::config(format!(
                "uniform prompt lengths need 1 <= lo <= hi, got [{lo}, {hi}]"
            ))),
            _ => Ok(()),
        }
    }
}

/// Prompts shared by every cell of a run or sweep, with a content digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    pub samples: Vec<Vec<TokenId>>,
    pub digest: String,
}

impl Workload {
    pub fn new(samples: Vec<Vec<TokenId>>) -> Self {
        let digest = digest_samples(&samples);
        Self { samples, digest }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.samples.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Consecutive groups of `batch_size` prompts.
    pub fn batches(&self, batch_size: usize) -> impl Iterator<Item = &[Vec<TokenId>]> {
        self.samples.chunks(batch_size.max(1))
    }
}

/// Hex SHA-256 (first 16 bytes) over the sample lengths and tokens.
pub fn digest_samples(samples: &[Vec<TokenId>]) -> String {
    let mut h = Sha256::new();
    h.update((samples.len() as u64).to_le_bytes());
    for s in samples {
        h.update((s.len() as u64).to_le_bytes());
        for t in s {
            h.update(t.to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..16])
}

/// Deterministic prompts: a BOS token followed by uniformly drawn content tokens.
pub fn gen_workload(spec: &WorkloadSpec, vocab_size: usize, seed: u64) -> Result<Workload> {
    spec.validate()?;
    if vocab_size <= FIRST_CONTENT_TOKEN as usize {
        return Err(Error::config("vocabulary has no content tokens"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..spec.num_samples)
        .map(|_| {
            let len = match spec.lengths {
                LengthDistribution::Fixed { len } => len,
                LengthDistribution::Uniform { lo, hi } => rng.gen_range(lo..=hi),
            }
            .min(spec.max_input_len);
            let mut s = Vec::with_capacity(len);
            s.push(BOS_TOKEN);
            while s.len() < len {
                s.push(rng.gen_range(FIRST_CONTENT_TOKEN..vocab_size as TokenId));
            }
            s
        })
        .collect();
    Ok(Workload::new(samples))
}

/// Batch sizes that evenly divide `num_samples`, ascending.
pub fn divisor_batch_sizes(num_samples: usize) -> Vec<usize> {
    (1..=num_samples).filter(|b| num_samples.is_multiple_of(*b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_lengths_and_determinism() {
        let spec = WorkloadSpec {
            num_samples: 8,
            lengths: LengthDistribution::Fixed { len: 128 },
            max_input_len: 3584,
        };
        let a = gen_workload(&spec, 64, 0).unwrap();
        assert_eq!(a.len(), 8);
        assert!(a.samples.iter().all(|s| s.len() == 128 && s[0] == BOS_TOKEN));
        assert!(a.samples.iter().flatten().skip(1).all(|&t| (t as usize) < 64));
        assert_eq!(a, gen_workload(&spec, 64, 0).unwrap());
        assert_ne!(a.samples, gen_workload(&spec, 64, 1).unwrap().samples);
    }

    #[test]
    fn uniform_lengths_in_range() {
        let spec = WorkloadSpec {
            num_samples: 50,
            lengths: LengthDistribution::Uniform { lo: 64, hi: 128 },
            max_input_len: 3584,
        };
        let w = gen_workload(&spec, 32, 5).unwrap();
        assert!(w.samples.iter().all(|s| (64..=128).contains(&s.len())));
    }

    #[test]
    fn cap_truncates() {
        let spec = WorkloadSpec {
            num_samples: 3,
            lengths: LengthDistribution::Fixed { len: 500 },
            max_input_len: 100,
        };
        assert_eq!(gen_workload(&spec, 32, 0).unwrap().max_len(), 100);
    }

    #[test]
    fn divisors_of_960_start_like_the_protocol_set() {
        let d = divisor_batch_sizes(960);
        assert_eq!(&d[..17], &[1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 16, 20, 24, 30, 32, 40, 48]);
        assert!(!d.contains(&7));
    }

    #[test]
    fn invalid_specs() {
        let mut spec = WorkloadSpec {
            lengths: LengthDistribution::Uniform { lo: 10, hi: 5 },
            ..WorkloadSpec::default()
        };
        assert!(spec.validate().is_err());
        spec.lengths = LengthDistribution::Fixed { len: 0 };
        assert!(spec.validate().is_err());
    }
}
