use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use byzagg::sim::{plateau, ExperimentConfig, MetricsRecord, RunOutput, SweepAxis, SweepCell};

pub const CSV_HEADER: &str =
    "run_id,round,estimator,attack,epsilon,m,n,d,H,k,param_err,agg_err,loss,grad_norm,converged,elapsed_ms,seed";

fn hash_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))[..16].to_string()
}

/// First 16 hex digits of the SHA-256 of the canonical config (seed included).
pub fn run_id(cfg: &ExperimentConfig) -> String {
    hash_hex(cfg.to_toml_string().as_bytes())
}

pub fn sweep_id(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64], seeds: &[u64]) -> String {
    let mut text = cfg.to_toml_string();
    let _ = write!(text, "\naxis={}\nvalues={values:?}\nseeds={seeds:?}\n", axis.name());
    hash_hex(text.as_bytes())
}

/// Bucket count for the CSV: the bucketing `k`, otherwise one bucket per client.
fn k_column(cfg: &ExperimentConfig, k: Option<usize>) -> usize {
    k.unwrap_or(cfg.experiment.m)
}

pub fn metrics_csv(id: &str, cfg: &ExperimentConfig, k: Option<usize>, records: &[MetricsRecord]) -> String {
    let e = &cfg.experiment;
    let mut out = String::with_capacity(128 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{id},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.round,
            cfg.estimator.kind.name(),
            cfg.attack.kind.name(),
            e.epsilon,
            e.m,
            e.n,
            e.d,
            e.h,
            k_column(cfg, k),
            r.param_err,
            r.agg_err,
            r.loss,
            r.grad_norm,
            u8::from(r.converged),
            r.elapsed_ms,
            e.seed
        );
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    run_id: &'a str,
    tool_version: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
    artifacts: [&'a str; 2],
    rounds: usize,
    w0_err: f64,
    final_param_err: Option<f64>,
    plateau: Option<f64>,
    malicious_clients: usize,
    estimator_failures: usize,
}

pub fn manifest_json(id: &str, cfg: &ExperimentConfig, out: &RunOutput) -> String {
    let m = Manifest {
        run_id: id,
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: cfg.experiment.seed,
        config: cfg,
        artifacts: ["metrics.csv", "manifest.json"],
        rounds: out.records.len(),
        w0_err: out.w0_err,
        final_param_err: out.records.last().map(|r| r.param_err),
        plateau: (!out.records.is_empty()).then(|| plateau(&out.records)),
        malicious_clients: out.malicious_ids.len(),
        estimator_failures: out.records.iter().filter(|r| r.estimator_failed).count(),
    };
    let mut s = serde_json::to_string_pretty(&m).expect("manifest serializes");
    s.push('\n');
    s
}

pub fn sweep_csv(axis: SweepAxis, cells: &[SweepCell], run_ids: &[String], seeds: usize) -> String {
    let mut out = String::from("axis,value,seeds,plateau_median,plateau_min,plateau_max,run_ids\n");
    for (cell, ids) in cells.iter().zip(run_ids.chunks(seeds)) {
        let min = cell.plateaus.iter().copied().fold(f64::INFINITY, f64::min);
        let max = cell.plateaus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            axis.name(),
            cell.value,
            cell.plateaus.len(),
            cell.median,
            min,
            max,
            ids.join(";")
        );
    }
    out
}

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
