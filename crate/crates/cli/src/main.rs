//! `pdcache`: run, sweep, plan and trace batched generation on the toy model.

mod config;
mod error;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pdcache::bench::{
    gen_workload, measure_run, sweep, sweep_summary, to_csv, to_jsonl, RunReport, Workload,
};
use pdcache::engine::{generate, pad_batch, CacheEviction, Method, RunOptions, TraceEvent};
use pdcache::memory::{bytes_per_sample, idle_pairs, kv_pair_bytes, max_batch, peak_kv_pairs};
use pdcache::model::{init_model, ModelWeights};
use serde::Serialize;

use crate::config::{parse_method, FileConfig, Overrides, DEMO_MAX_GEN};
use crate::error::{CliError, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "pdcache", version, about = "Batched generation with bounded KV caches on a toy transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate for the whole workload with one configuration and report throughput.
    Run(CommonArgs),
    /// Evaluate a grid of (method, batch size, kvmax) cells under the budget.
    Sweep(CommonArgs),
    /// Print the analytic memory plan of every method.
    Plan(CommonArgs),
    /// Dump the schedule and per-cache eviction events of the first batch as JSONL.
    Trace(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML configuration file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cache method: bm, ed or fkv.
    #[arg(long)]
    method: Option<String>,
    /// Batch size.
    #[arg(long)]
    b: Option<usize>,
    /// Cache cap in key/value pairs.
    #[arg(long)]
    kvmax: Option<usize>,
    /// Pairs evicted per eviction (BM).
    #[arg(long)]
    p: Option<usize>,
    /// Tokens generated per sample.
    #[arg(long)]
    max_gen: Option<usize>,
    /// Seed for weights and workload.
    #[arg(long, env = "PDCACHE_SEED")]
    seed: Option<u64>,
    /// KV cache memory budget in bytes.
    #[arg(long, allow_hyphen_values = true)]
    budget_bytes: Option<i64>,
    /// Write results here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write the effective configuration (TOML) here.
    #[arg(long)]
    echo_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

impl CommonArgs {
    fn resolve(&self) -> Result<FileConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let method = self.method.as_deref().map(parse_method).transpose()?;
        cfg.apply(&Overrides {
            method,
            b: self.b,
            kvmax: self.kvmax,
            p: self.p,
            max_gen: self.max_gen,
            seed: self.seed,
            budget_bytes: self.budget_bytes,
        });
        Ok(cfg)
    }
}

fn echo(cfg: &FileConfig, args: &CommonArgs) -> Result<(), CliError> {
    let text = cfg.to_toml();
    eprintln!("# effective config\n{text}");
    if let Some(path) = &args.echo_config {
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn emit(args: &CommonArgs, text: &str) -> Result<(), CliError> {
    match &args.output {
        Some(path) => write_file(path, text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn setup(cfg: &FileConfig) -> Result<(ModelWeights<f32>, Workload), CliError> {
    cfg.workload.validate()?;
    let weights = init_model::<f32>(&cfg.model, cfg.seed)?;
    let workload = gen_workload(&cfg.workload, cfg.model.vocab_size, cfg.seed)?;
    Ok((weights, workload))
}

fn render_reports(reports: &[RunReport], format: Format) -> String {
    match format {
        Format::Csv => to_csv(reports),
        Format::Jsonl => to_jsonl(reports),
    }
}

fn cmd_run(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let run = cfg.run_config()?;
    let budget = cfg.memory_spec()?;
    run.validate()?;
    echo(&cfg, args)?;
    let (weights, workload) = setup(&cfg)?;
    let report = measure_run(&run, &workload, &weights, Some(&budget), None)?;
    emit(args, &render_reports(std::slice::from_ref(&report), args.format))?;
    if report.is_oom() {
        return Err(CliError::Oom(format!(
            "{} at b={} needs {} pairs per sample, budget is {} bytes",
            run.method, run.batch_size, report.predicted_peak_kv_pairs, budget.budget_bytes
        )));
    }
    Ok(())
}

fn cmd_sweep(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg = args.resolve()?;
    if cfg.sweep.is_none() && args.max_gen.is_none() {
        cfg.run.max_gen = DEMO_MAX_GEN;
    }
    let grid = cfg.sweep_grid()?;
    let budget = cfg.memory_spec()?;
    echo(&cfg, args)?;
    let (weights, workload) = setup(&cfg)?;
    let result = sweep(&grid, &workload, &weights, Some(&budget))?;
    emit(args, &render_reports(&result.reports, args.format))?;
    print!("{}", sweep_summary(&result));
    Ok(())
}

fn cmd_plan(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let budget = cfg.memory_spec()?;
    cfg.workload.validate()?;
    echo(&cfg, args)?;
    let s = match cfg.workload.lengths {
        pdcache::bench::LengthDistribution::Fixed { len } => len,
        pdcache::bench::LengthDistribution::Uniform { hi, .. } => hi,
    };
    let g = cfg.run.max_gen;
    let b = cfg.run.b;
    let mut out = format!(
        "# s={s} max_gen={g} b={b} budget_bytes={} kv_pair_bytes={}\n",
        budget.budget_bytes,
        kv_pair_bytes(&budget)
    );
    out.push_str("method,kvmax,peak_kv_pairs,bytes_per_sample,max_batch,idle_pairs\n");
    for method in [Method::Bm, Method::Ed, Method::Fkv] {
        let mut run = cfg.run_config()?;
        run.method = method;
        if method != Method::Bm {
            run.kvmax = None;
        }
        let Ok(kvmax) = run.effective_kvmax() else {
            out.push_str(&format!("{},missing kvmax,,,,\n", method.label()));
            continue;
        };
        let peak = peak_kv_pairs(method, s, kvmax, g);
        let idle = match method {
            Method::Ed => idle_pairs(s, kvmax, b).to_string(),
            _ => "0".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            method.label(),
            run.reported_kvmax().map_or_else(|| "N/A".to_string(), |k| k.to_string()),
            peak,
            bytes_per_sample(&budget, peak),
            max_batch(&budget, method, s, kvmax, g),
            idle
        ));
    }
    emit(args, &out)
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceRecord<'a> {
    Schedule(&'a TraceEvent),
    Eviction(&'a CacheEviction),
}

fn cmd_trace(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let run = cfg.run_config()?;
    run.validate()?;
    echo(&cfg, args)?;
    let (weights, workload) = setup(&cfg)?;
    let first = workload
        .batches(run.batch_size)
        .next()
        .ok_or_else(|| CliError::Config("workload is empty".into()))?;
    let batch = pad_batch(first)?;
    let opts = RunOptions { keep_logits: false, log_evictions: true };
    let generation = generate(&batch, &run, &weights, opts)?;
    let records: Vec<TraceRecord> = generation
        .trace
        .events
        .iter()
        .map(TraceRecord::Schedule)
        .chain(generation.evictions.iter().map(TraceRecord::Eviction))
        .collect();
    emit(args, &to_jsonl(&records))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Trace(a) => cmd_trace(a),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
