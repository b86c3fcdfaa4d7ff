//! CSV and line-delimited JSON renderings of run reports.

use std::fmt::Write as _;

use serde::Serialize;

use super::measure::RunReport;
use super::sweep::SweepResult;
use crate::engine::Method;

pub const CSV_HEADER: &str = "method,b,kvmax,agreement,tokens_per_s,peak_kv_pairs,status";

/// One CSV row; OOM rows print `OOM` in the measurement columns.
pub fn csv_row(r: &RunReport) -> String {
    let kvmax = match r.config.reported_kvmax() {
        Some(k) => k.to_string(),
        None => "N/A".to_string(),
    };
    let (agreement, tps) = if r.is_oom() {
        ("OOM".to_string(), "OOM".to_string())
    } else {
        (
            r.agreement_vs_fkv.map_or_else(String::new, |a| format!("{a:.4}")),
            r.tokens_per_second.map_or_else(String::new, |t| format!("{t:.1}")),
        )
    };
    format!(
        "{},{},{},{},{},{},{}",
        r.config.method.label(),
        r.config.batch_size,
        kvmax,
        agreement,
        tps,
        r.peak_kv_pairs,
        r.status.as_str()
    )
}

pub fn to_csv<'a>(reports: impl IntoIterator<Item = &'a RunReport>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

/// One JSON object per line.
pub fn to_jsonl<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("report serializes"));
        out.push('\n');
    }
    out
}

fn describe(r: &RunReport) -> String {
    let mut s = format!("{} b={}", r.config.method, r.config.batch_size);
    if let Some(k) = r.config.reported_kvmax() {
        let _ = write!(s, " kvmax={k}");
    }
    if let Some(t) = r.tokens_per_second {
        let _ = write!(s, " tokens/s={t:.1}");
    }
    if let Some(a) = r.agreement_vs_fkv {
        let _ = write!(s, " agreement={a:.4}");
    }
    s
}

/// Human-readable summary naming b0 and the best cell of each method.
pub fn sweep_summary(result: &SweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "workload digest: {}", result.workload_digest);
    match result.b0 {
        Some(b) => {
            let _ = writeln!(out, "b0 (smallest ED batch over budget): {b}");
        }
        None => {
            let _ = writeln!(out, "b0: n/a");
        }
    }
    for (label, idx) in [
        ("ED best", result.ed_best),
        ("FKV baseline", result.fkv_baseline),
        ("BM best", result.bm_best),
    ] {
        let line = result
            .report(idx)
            .map_or_else(|| "n/a".to_string(), describe);
        let _ = writeln!(out, "{label}: {line}");
    }
    if let (Some(bm), Some(ed)) = (result.report(result.bm_best), result.report(result.ed_best)) {
        if let (Some(a), Some(b)) = (bm.tokens_per_second, ed.tokens_per_second) {
            let _ = writeln!(out, "BM/ED throughput ratio: {:.3}", a / b);
        }
    }
    out
}

/// Reports of one method, in sweep order.
pub fn reports_for(result: &SweepResult, method: Method) -> impl Iterator<Item = &RunReport> {
    result.reports.iter().filter(move |r| r.config.method == method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::measure::RunStatus;
    use crate::engine::RunConfig;
    use crate::model::ModelConfig;

    fn report(method: Method, kvmax: Option<usize>, status: RunStatus) -> RunReport {
        RunReport {
            config: RunConfig::new(method, 4, kvmax, ModelConfig::default()),
            status,
            num_samples: 8,
            generated_tokens: 64,
            tokens_per_second: Some(41.96),
            wall_secs: 1.0,
            prefill_secs: 0.5,
            decode_secs: 0.5,
            peak_kv_pairs: 65,
            predicted_peak_kv_pairs: 65,
            agreement_vs_fkv: Some(0.5),
            mean_logit_divergence: Some(0.0),
            mean_eviction_events_per_sample: 1.0,
            workload_digest: "abc".into(),
            trace_digest: "def".into(),
        }
    }

    #[test]
    fn csv_layout() {
        let rows = [
            report(Method::Ed, Some(2), RunStatus::Ok),
            report(Method::Fkv, None, RunStatus::Ok),
            report(Method::Ed, None, RunStatus::Oom),
        ];
        let csv = to_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,b,kvmax,agreement,tokens_per_s,peak_kv_pairs,status");
        assert_eq!(lines[1], "ED,4,2,0.5000,42.0,65,ok");
        assert_eq!(lines[2], "FKV,4,N/A,0.5000,42.0,65,ok");
        assert_eq!(lines[3], "ED,4,2,OOM,OOM,65,oom");
    }

    #[test]
    fn jsonl_is_one_object_per_line() {
        let rows = [report(Method::Bm, Some(8), RunStatus::Ok)];
        let text = to_jsonl(&rows);
        assert_eq!(text.lines().count(), 1);
        let back: RunReport = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(back, rows[0]);
    }
}
