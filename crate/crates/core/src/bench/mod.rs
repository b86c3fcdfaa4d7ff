//! Synthetic workloads, throughput measurement and budget-constrained sweeps.

mod measure;
mod report;
mod sweep;
mod workload;

pub use measure::{
    fkv_reference, measure_run, predicted_peak, token_agreement, FkvReference, RunReport, RunStatus,
};
pub use report::{csv_row, reports_for, sweep_summary, to_csv, to_jsonl, CSV_HEADER};
pub use sweep::{
    kvmax_candidates, oom_monotonicity_violations, refine_kvmax, sweep, GridCell, SweepGrid, SweepResult,
};
pub use workload::{
    digest_samples, divisor_batch_sizes, gen_workload, LengthDistribution, Workload, WorkloadSpec,
};
