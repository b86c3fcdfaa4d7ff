//! Budget-constrained throughput comparison of ED, FKV and BM on the toy model.
//!
//! cargo run --release -p pdcache --example throughput

use pdcache::bench::{gen_workload, sweep, sweep_summary, to_csv, LengthDistribution, SweepGrid, WorkloadSpec};
use pdcache::engine::Method;
use pdcache::memory::MemorySpec;
use pdcache::model::{init_model, ModelConfig};

fn main() -> pdcache::Result<()> {
    let mut model = ModelConfig::new(4, 4, 32, 256, 1024);
    model.dtype_bytes = 4;
    let weights = init_model::<f32>(&model, 0)?;
    let workload = gen_workload(
        &WorkloadSpec {
            num_samples: 8,
            lengths: LengthDistribution::Fixed { len: 512 },
            max_input_len: 3584,
        },
        model.vocab_size,
        0,
    )?;
    // 4 MiB: ED (512 pairs/sample) fits 2, BM at kvmax=128 fits 8
    let budget = MemorySpec::from_model(&model, 4 << 20);
    let mut grid = SweepGrid {
        cells: Vec::new(),
        p: 64,
        max_gen: 128,
        seed: 0,
        model,
        agreement_threshold: 0.0,
        refine_step: None,
    };
    grid.push_product(Method::Ed, &[1, 2, 4], &[Some(2)]);
    grid.push_product(Method::Fkv, &[1], &[None]);
    grid.push_product(Method::Bm, &[4, 8], &[Some(128), Some(256)]);
    let result = sweep(&grid, &workload, &weights, Some(&budget))?;
    print!("{}", to_csv(&result.reports));
    print!("{}", sweep_summary(&result));
    for r in &result.reports {
        println!(
            "{} b={} prefill={:.3}s decode={:.3}s wall={:.3}s div={:?}",
            r.config.method, r.config.batch_size, r.prefill_secs, r.decode_secs, r.wall_secs, r.mean_logit_divergence
        );
    }
    Ok(())
}
