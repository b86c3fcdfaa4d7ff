use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 5

[model]
num_layers = 1
num_heads = 2
head_dim = 8
ffn_dim = 64
vocab_size = 32
dtype_bytes = 4
max_position = 512

[workload]
num_samples = 4
max_input_len = 256

[workload.lengths]
kind = "uniform"
lo = 20
hi = 40

[run]
method = "bm"
b = 2
kvmax = 16
p = 4
max_gen = 12

[budget]
budget_bytes = 1048576
overhead_bytes_per_sample = 0
"#;

fn pdcache(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdcache"))
        .args(args)
        .env_remove("PDCACHE_SEED")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_writes_one_csv_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = pdcache(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "method,b,kvmax,agreement,tokens_per_s,peak_kv_pairs,status");
    assert!(lines[1].starts_with("BM,2,16,"), "{}", lines[1]);
    assert!(lines[1].ends_with(",16,ok"), "{}", lines[1]);
}

#[test]
fn fkv_agrees_with_itself() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = pdcache(&["run", "--config", &cfg, "--method", "fkv"]);
    assert_eq!(o.status.code(), Some(0));
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    assert!(row.starts_with("FKV,2,N/A,1.0000,"), "{row}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let oom = pdcache(&["run", "--config", &cfg, "--method", "ed", "--b", "1000000"]);
    assert_eq!(oom.status.code(), Some(4));
    assert!(stdout(&oom).contains(",OOM,OOM,"));
    // OOM wins over the batch size not dividing the workload
    assert_eq!(pdcache(&["run", "--method", "ed", "--b", "1000000"]).status.code(), Some(4));
    assert_eq!(pdcache(&["run", "--method", "bm", "--kvmax", "8", "--p", "64"]).status.code(), Some(3));
    assert_eq!(pdcache(&["run", "--method", "h2o"]).status.code(), Some(2));
    assert_eq!(pdcache(&["run", "--bogus-flag"]).status.code(), Some(2));
    assert_eq!(pdcache(&["plan", "--budget-bytes", "0"]).status.code(), Some(3));
    assert_eq!(pdcache(&["plan", "--budget-bytes", "-1"]).status.code(), Some(3));
    assert_eq!(pdcache(&["run", "--config", &cfg, "--b", "3"]).status.code(), Some(3));
    let missing = dir.path().join("nope.toml");
    assert_eq!(pdcache(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(3));
    let bad = write_config(dir.path(), "[run]\nfrobnicate = 1\n");
    assert_eq!(pdcache(&["run", "--config", &bad]).status.code(), Some(3));
}

#[test]
fn plan_table() {
    let o = pdcache(&["plan", "--max-gen", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    // 4 layers * 4 heads * 32 dims * 4 bytes * (key + value)
    assert!(out.contains("kv_pair_bytes=4096"), "{out}");
    assert!(out.contains("BM,128,128,524288,16,0"), "{out}");
    assert!(out.contains("ED,2,512,2097152,4,2040"), "{out}");
    assert!(out.contains("FKV,N/A,512,2097152,4,0"), "{out}");
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let echo = dir.path().join("echo.toml");
    let first = pdcache(&[
        "run", "--config", &cfg, "--kvmax", "12", "--seed", "9", "--format", "jsonl",
        "--echo-config", echo.to_str().unwrap(),
    ]);
    assert_eq!(first.status.code(), Some(0));
    let again = pdcache(&["run", "--config", echo.to_str().unwrap(), "--format", "jsonl"]);
    assert_eq!(again.status.code(), Some(0));
    let field = |o: &Output, key: &str| {
        let line = stdout(o);
        let start = line.find(&format!("\"{key}\":\"")).unwrap() + key.len() + 4;
        line[start..start + 32].to_string()
    };
    assert_eq!(field(&first, "workload_digest"), field(&again, "workload_digest"));
    assert_eq!(field(&first, "trace_digest"), field(&again, "trace_digest"));
    assert!(stdout(&first).contains("\"kvmax\":12"));
    assert!(stdout(&first).contains("\"seed\":9"));
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_pdcache"))
        .args(["run", "--config", &cfg, "--format", "jsonl"])
        .env("PDCACHE_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"seed\":77"));
}

#[test]
fn output_file_and_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("report.jsonl");
    let o = pdcache(&["run", "--config", &cfg, "--format", "jsonl", "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("\"status\":\"ok\""));
    assert!(text.contains("\"generated_tokens\":48"));
}

#[test]
fn sweep_with_grid_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL}\n[sweep]\nagreement_threshold = 0.0\n\n[[sweep.cells]]\nmethod = \"ed\"\nb = [1, 2, 4]\n\n\
         [[sweep.cells]]\nmethod = \"fkv\"\nb = [2]\n\n[[sweep.cells]]\nmethod = \"bm\"\nb = [2, 4]\nkvmax = [12, 16]\n"
    );
    let cfg = write_config(dir.path(), &text);
    let o = pdcache(&["sweep", "--config", &cfg, "--budget-bytes", "12288"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().filter(|l| l.ends_with(",ok") || l.ends_with(",oom")).collect();
    assert_eq!(rows.len(), 8, "{out}");
    // pair = 1*2*8*4*2 = 128 bytes; the longest prompt is 37 slots, so ED fits b=2,
    // FKV (37 + 11 pairs) fits b=2 exactly, BM fits both batch sizes
    assert!(out.contains("ED,2,2,0."), "{out}");
    assert!(out.contains("ED,4,2,OOM,OOM,37,oom"), "{out}");
    assert!(out.contains("FKV,2,N/A,1.0000,"), "{out}");
    assert_eq!(rows.iter().filter(|r| r.starts_with("BM,") && r.ends_with(",ok")).count(), 4);
    assert!(out.contains("b0 (smallest ED batch over budget): 3"), "{out}");
    assert!(out.contains("BM best: BM b="), "{out}");
}

#[test]
fn trace_dumps_schedule_and_evictions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = pdcache(&["trace", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let schedule = out.lines().filter(|l| l.contains("\"record\":\"schedule\"")).count();
    let evictions = out.lines().filter(|l| l.contains("\"record\":\"eviction\"")).count();
    assert!(schedule >= 12, "{out}");
    // every schedule-level eviction is logged once per (layer, sample, head)
    let sched_evicts = out
        .lines()
        .filter(|l| l.contains("\"record\":\"schedule\"") && l.contains("\"event\":\"evict\""))
        .count();
    assert_eq!(evictions, sched_evicts * 2 * 2);
    assert!(out.lines().all(|l| l.starts_with('{') && l.ends_with('}')));
}
