use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv_cache::EvictionPolicy;
use crate::model::ModelConfig;

/// Eviction amount used by every prefill-and-decode run unless overridden.
pub const DEFAULT_EVICTION_AMOUNT: usize = 64;
/// Tokens generated per sample unless overridden.
pub const DEFAULT_MAX_GEN: usize = 512;
/// Cache cap of the extreme decoding-only baseline.
pub const DEFAULT_ED_KVMAX: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Block-wise prefill and decode, evicting `p` pairs by average attention
    /// whenever the cache is full.
    Bm,
    /// Uncompressed prefill, then keep only the most recent pair.
    Ed,
    /// Full cache, no eviction.
    Fkv,
}

impl Method {
    pub fn policy(self, p: usize) -> EvictionPolicy {
        match self {
            Self::Bm => EvictionPolicy::AverageAttention { p },
            Self::Ed => EvictionPolicy::MostRecentOnly,
            Self::Fkv => EvictionPolicy::NoEviction,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Bm => "BM",
            Self::Ed => "ED",
            Self::Fkv => "FKV",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bm" => Ok(Self::Bm),
            "ed" => Ok(Self::Ed),
            "fkv" => Ok(Self::Fkv),
            other => Err(Error::input(format!("unknown method `{other}` (expected bm, ed or fkv)"))),
        }
    }
}

/// Everything needed to reproduce one generation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub batch_size: usize,
    /// Cache cap per (layer, head, sample). `None` means the method default:
    /// 2 for ED, unbounded for FKV. Required for BM.
    pub kvmax: Option<usize>,
    pub p: usize,
    pub max_gen: usize,
    pub seed: u64,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn new(method: Method, batch_size: usize, kvmax: Option<usize>, model: ModelConfig) -> Self {
        Self {
            method,
            batch_size,
            kvmax,
            p: DEFAULT_EVICTION_AMOUNT,
            max_gen: DEFAULT_MAX_GEN,
            seed: 0,
            model,
        }
    }

    /// Cap actually enforced on each cache (`usize::MAX` for FKV).
    pub fn effective_kvmax(&self) -> Result<usize> {
        match self.method {
            Method::Fkv => Ok(usize::MAX),
            Method::Ed => Ok(self.kvmax.unwrap_or(DEFAULT_ED_KVMAX)),
            Method::Bm => self
                .kvmax
                .ok_or_else(|| Error::config("BM requires an explicit kvmax")),
        }
    }

    /// Cap to report: `None` for FKV.
    pub fn reported_kvmax(&self) -> Option<usize> {
        match self.method {
            Method::Fkv => None,
            _ => self.effective_kvmax().ok(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.max_gen == 0 {
            return Err(Error::config("max_gen must be at least 1"));
        }
        let kvmax = self.effective_kvmax()?;
        match self.method {
            Method::Bm | Method::Ed if kvmax < 2 => {
                Err(Error::config(format!("kvmax must be at least 2, got {kvmax}")))
            }
            Method::Bm if self.p >= kvmax => Err(Error::config(format!(
                "eviction amount p={} must be smaller than kvmax={kvmax}",
                self.p
            ))),
            _ => self.method.policy(self.p).validate(kvmax),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_methods() {
        assert_eq!("bm".parse::<Method>().unwrap(), Method::Bm);
        assert_eq!("FKV".parse::<Method>().unwrap(), Method::Fkv);
        assert!(matches!("h2o".parse::<Method>(), Err(Error::Input(_))));
    }

    #[test]
    fn bm_requires_p_below_kvmax() {
        let mut c = RunConfig::new(Method::Bm, 1, Some(8), ModelConfig::default());
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.p = 2;
        assert!(c.validate().is_ok());
        c.kvmax = Some(1);
        c.p = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.kvmax = None;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn defaults_per_method() {
        let m = ModelConfig::default();
        assert_eq!(RunConfig::new(Method::Ed, 1, None, m).effective_kvmax().unwrap(), 2);
        assert_eq!(RunConfig::new(Method::Fkv, 1, Some(4), m).reported_kvmax(), None);
        let ed = RunConfig::new(Method::Ed, 1, Some(1), m);
        assert!(matches!(ed.validate(), Err(Error::Config(_))));
        let c = RunConfig::new(Method::Fkv, 1, None, m);
        assert_eq!((c.p, c.max_gen), (64, 512));
    }
}
