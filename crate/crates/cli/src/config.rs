//! TOML configuration file: flat keys grouped into sections, with CLI overrides.

use std::path::Path;

use pdcache::bench::{SweepGrid, WorkloadSpec};
use pdcache::engine::{Method, RunConfig, DEFAULT_EVICTION_AMOUNT, DEFAULT_MAX_GEN};
use pdcache::memory::MemorySpec;
use pdcache::model::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub workload: WorkloadSpec,
    pub run: RunSection,
    pub budget: BudgetSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub method: String,
    pub b: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kvmax: Option<usize>,
    pub p: usize,
    pub max_gen: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    pub budget_bytes: i64,
    pub overhead_bytes_per_sample: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub agreement_threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine_step: Option<usize>,
    pub cells: Vec<CellSpec>,
}

/// One block of grid rows: every `b` crossed with every `kvmax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub method: String,
    pub b: Vec<usize>,
    #[serde(default)]
    pub kvmax: Vec<usize>,
}

impl Default for FileConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelConfig::default(),
            workload: WorkloadSpec::default(),
            run: RunSection::default(),
            budget: BudgetSection::default(),
            sweep: None,
        }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            method: "bm".into(),
            b: 4,
            kvmax: None,
            p: DEFAULT_EVICTION_AMOUNT,
            max_gen: DEFAULT_MAX_GEN,
        }
    }
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            budget_bytes: 8 << 20,
            overhead_bytes_per_sample: 0,
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            agreement_threshold: 0.0,
            refine_step: None,
            cells: Vec::new(),
        }
    }
}

/// Grid used by `sweep` when the file has no `[sweep]` section: ED up to and
/// past its budget limit, FKV, and BM at two caps, with 128 generated tokens.
pub fn demo_sweep() -> SweepSection {
    SweepSection {
        agreement_threshold: 0.0,
        refine_step: None,
        cells: vec![
            CellSpec { method: "ed".into(), b: vec![1, 2, 4, 8], kvmax: vec![2] },
            CellSpec { method: "fkv".into(), b: vec![1, 2], kvmax: vec![] },
            CellSpec { method: "bm".into(), b: vec![4, 8], kvmax: vec![128, 256] },
        ],
    }
}
pub const DEMO_MAX_GEN: usize = 128;
/// Cap used by BM when neither the file nor the flags give one.
pub const DEFAULT_BM_KVMAX: usize = 128;

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub b: Option<usize>,
    pub kvmax: Option<usize>,
    pub p: Option<usize>,
    pub max_gen: Option<usize>,
    pub seed: Option<u64>,
    pub budget_bytes: Option<i64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.method {
            self.run.method = m.label().to_ascii_lowercase();
        }
        if let Some(b) = o.b {
            self.run.b = b;
        }
        if let Some(k) = o.kvmax {
            self.run.kvmax = Some(k);
        }
        if let Some(p) = o.p {
            self.run.p = p;
        }
        if let Some(g) = o.max_gen {
            self.run.max_gen = g;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(bytes) = o.budget_bytes {
            self.budget.budget_bytes = bytes;
        }
        if self.run.kvmax.is_none() && self.run.method.eq_ignore_ascii_case("bm") {
            self.run.kvmax = Some(DEFAULT_BM_KVMAX);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn method(&self) -> Result<Method, CliError> {
        parse_method(&self.run.method)
    }

    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        Ok(RunConfig {
            method: self.method()?,
            batch_size: self.run.b,
            kvmax: self.run.kvmax,
            p: self.run.p,
            max_gen: self.run.max_gen,
            seed: self.seed,
            model: self.model,
        })
    }

    pub fn memory_spec(&self) -> Result<MemorySpec, CliError> {
        if self.budget.budget_bytes <= 0 {
            return Err(CliError::Config(format!(
                "budget_bytes must be positive, got {}",
                self.budget.budget_bytes
            )));
        }
        let mut spec = MemorySpec::from_model(&self.model, self.budget.budget_bytes as u64);
        spec.overhead_bytes_per_sample = self.budget.overhead_bytes_per_sample;
        spec.validate()?;
        Ok(spec)
    }

    pub fn sweep_grid(&self) -> Result<SweepGrid, CliError> {
        let section = self.sweep.clone().unwrap_or_else(demo_sweep);
        let mut grid = SweepGrid {
            cells: Vec::new(),
            p: self.run.p,
            max_gen: self.run.max_gen,
            seed: self.seed,
            model: self.model,
            agreement_threshold: section.agreement_threshold,
            refine_step: section.refine_step,
        };
        for spec in &section.cells {
            let method = parse_method(&spec.method)?;
            let caps: Vec<Option<usize>> = if spec.kvmax.is_empty() || method == Method::Fkv {
                vec![None]
            } else {
                spec.kvmax.iter().copied().map(Some).collect()
            };
            grid.push_product(method, &spec.b, &caps);
        }
        Ok(grid)
    }
}

pub fn parse_method(s: &str) -> Result<Method, CliError> {
    s.parse::<Method>().map_err(|e| CliError::Usage(e.to_string()))
}
