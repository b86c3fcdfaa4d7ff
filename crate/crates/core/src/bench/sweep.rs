use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::measure::{fkv_reference, measure_run, FkvReference, RunReport};
use super::workload::Workload;
use crate::engine::{Method, RunConfig, DEFAULT_ED_KVMAX};
use crate::error::{Error, Result};
use crate::memory::{max_batch, MemorySpec};
use crate::model::{ModelConfig, ModelWeights};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub method: Method,
    pub batch_size: usize,
    pub kvmax: Option<usize>,
}

/// Cells to evaluate plus the settings shared by all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub cells: Vec<GridCell>,
    pub p: usize,
    pub max_gen: usize,
    pub seed: u64,
    pub model: ModelConfig,
    /// Minimum agreement with FKV for a BM cell to count as the best.
    pub agreement_threshold: f64,
    /// When set, the best stage-one BM cap is refined by ± this step.
    pub refine_step: Option<usize>,
}

impl SweepGrid {
    pub fn run_config(&self, cell: &GridCell) -> RunConfig {
        RunConfig {
            method: cell.method,
            batch_size: cell.batch_size,
            kvmax: cell.kvmax,
            p: self.p,
            max_gen: self.max_gen,
            seed: self.seed,
            model: self.model,
        }
    }

    /// Adds one cell per `(b, kvmax)` combination for `method`.
    pub fn push_product(&mut self, method: Method, batch_sizes: &[usize], kvmaxes: &[Option<usize>]) {
        for &batch_size in batch_sizes {
            for &kvmax in kvmaxes {
                self.cells.push(GridCell { method, batch_size, kvmax });
            }
        }
    }
}

/// Multiples of `step` in `[lo, hi]`.
pub fn kvmax_candidates(lo: usize, hi: usize, step: usize) -> Vec<usize> {
    if step == 0 {
        return Vec::new();
    }
    let first = lo.div_ceil(step) * step;
    (first..=hi).step_by(step).filter(|&k| k > 0).collect()
}

/// Second-stage caps around `best`: `best - step` and `best + step`.
pub fn refine_kvmax(best: usize, step: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if best > step {
        out.push(best - step);
    }
    out.push(best + step);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// One report per evaluated cell, grid order first, refinement cells after.
    pub reports: Vec<RunReport>,
    /// Smallest batch at which ED exceeds the budget.
    pub b0: Option<usize>,
    pub ed_best: Option<usize>,
    pub fkv_baseline: Option<usize>,
    pub bm_best: Option<usize>,
    pub workload_digest: String,
}

fn best_by_throughput<'a>(
    reports: &'a [RunReport],
    keep: impl Fn(&RunReport) -> bool + 'a,
) -> Option<usize> {
    reports
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_oom() && keep(r))
        .max_by(|(_, a), (_, b)| {
            a.tokens_per_second
                .partial_cmp(&b.tokens_per_second)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
}

impl SweepResult {
    fn summarize(&mut self, threshold: f64) {
        self.ed_best = best_by_throughput(&self.reports, |r| r.config.method == Method::Ed);
        self.fkv_baseline = best_by_throughput(&self.reports, |r| r.config.method == Method::Fkv);
        self.bm_best = best_by_throughput(&self.reports, move |r| {
            r.config.method == Method::Bm && r.agreement_vs_fkv.unwrap_or(0.0) >= threshold
        });
    }

    pub fn report(&self, idx: Option<usize>) -> Option<&RunReport> {
        idx.map(|i| &self.reports[i])
    }
}

/// Violations of "OOM at (m, b, k) implies OOM at (m, b+, k) and (m, b, k+)".
pub fn oom_monotonicity_violations(reports: &[RunReport]) -> Vec<String> {
    let mut out = Vec::new();
    for a in reports.iter().filter(|r| r.is_oom()) {
        for b in reports.iter().filter(|r| !r.is_oom()) {
            let (ca, cb) = (&a.config, &b.config);
            if ca.method != cb.method {
                continue;
            }
            let ka = ca.effective_kvmax().unwrap_or(usize::MAX);
            let kb = cb.effective_kvmax().unwrap_or(usize::MAX);
            let bigger_batch = ka == kb && cb.batch_size > ca.batch_size;
            let bigger_cap = ca.batch_size == cb.batch_size && kb > ka;
            if bigger_batch || bigger_cap {
                out.push(format!(
                    "{} b={} kvmax={ka} is OOM but b={} kvmax={kb} fits",
                    ca.method, ca.batch_size, cb.batch_size
                ));
            }
        }
    }
    out
}

struct References<'a, T> {
    workload: &'a Workload,
    weights: &'a ModelWeights<T>,
    cache: BTreeMap<usize, FkvReference<T>>,
}

impl<T: Scalar> References<'_, T> {
    fn get(&mut self, cfg: &RunConfig) -> Result<&FkvReference<T>> {
        let b = cfg.batch_size;
        if !self.cache.contains_key(&b) {
            let r = fkv_reference(self.workload, cfg, b, self.weights)?;
            self.cache.insert(b, r);
        }
        Ok(&self.cache[&b])
    }
}

/// Evaluates every cell of `grid` on the same workload, sequentially.
///
/// Cells over `budget` are reported as OOM. When `refine_step` is set, the best
/// admissible BM cell's cap is refined once and those cells are appended.
pub fn sweep<T: Scalar>(
    grid: &SweepGrid,
    workload: &Workload,
    weights: &ModelWeights<T>,
    budget: Option<&MemorySpec>,
) -> Result<SweepResult> {
    if grid.cells.is_empty() {
        return Err(Error::input("sweep grid has no cells"));
    }
    if let Some(bad) = grid.cells.iter().find(|c| c.batch_size == 0 || !workload.len().is_multiple_of(c.batch_size)) {
        return Err(Error::config(format!(
            "batch size {} must divide the number of samples ({}) so every cell sees the same samples",
            bad.batch_size,
            workload.len()
        )));
    }
    for cell in &grid.cells {
        grid.run_config(cell).validate()?;
    }

    let mut refs = References {
        workload,
        weights,
        cache: BTreeMap::new(),
    };
    let mut run_cell = |cell: &GridCell| -> Result<RunReport> {
        let cfg = grid.run_config(cell);
        let reference = match cell.method {
            Method::Fkv => None,
            _ => Some(refs.get(&cfg)?),
        };
        measure_run(&cfg, workload, weights, budget, reference)
    };

    let mut reports = Vec::with_capacity(grid.cells.len());
    for cell in &grid.cells {
        reports.push(run_cell(cell)?);
    }

    let mut result = SweepResult {
        reports,
        b0: None,
        ed_best: None,
        fkv_baseline: None,
        bm_best: None,
        workload_digest: workload.digest.clone(),
    };
    result.summarize(grid.agreement_threshold);

    if let (Some(step), Some(best)) = (grid.refine_step, result.report(result.bm_best)) {
        let best_k = best.config.kvmax.expect("BM cells carry kvmax");
        let bm_batches: Vec<usize> = {
            let mut v: Vec<usize> = grid
                .cells
                .iter()
                .filter(|c| c.method == Method::Bm)
                .map(|c| c.batch_size)
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        for k in refine_kvmax(best_k, step) {
            for &b in &bm_batches {
                let cell = GridCell { method: Method::Bm, batch_size: b, kvmax: Some(k) };
                if grid.cells.contains(&cell) || grid.run_config(&cell).validate().is_err() {
                    continue;
                }
                result.reports.push(run_cell(&cell)?);
            }
        }
        result.summarize(grid.agreement_threshold);
    }

    if let Some(spec) = budget {
        let ed_kvmax = grid
            .cells
            .iter()
            .filter(|c| c.method == Method::Ed)
            .map(|c| c.kvmax.unwrap_or(DEFAULT_ED_KVMAX))
            .min();
        result.b0 = ed_kvmax.map(|k| max_batch(spec, Method::Ed, workload.max_len(), k, grid.max_gen) + 1);
    }
    Ok(result)
}
