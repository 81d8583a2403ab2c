//! Wall-clock comparison of sequential and parallel LRU execution.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{lru_init, LruDims, LruInitConfig, LruParams};
use crate::recurrence::{lru_forward, ExecMode, SequenceBatch};
use crate::report::ExperimentReport;
use crate::rng;

pub const BENCH_COLUMNS: [&str; 4] = ["len", "threads", "mode", "median_ns"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub lengths: Vec<usize>,
    pub threads: Vec<usize>,
    pub n: usize,
    pub reps: usize,
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            lengths: vec![1 << 10, 1 << 12, 1 << 14, 1 << 16],
            threads: vec![1, 2, 4, 8],
            n: 64,
            reps: 5,
            warmup: 1,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(&l) = self.lengths.iter().find(|&&l| !l.is_power_of_two() || l > 1 << 20) {
            return Err(Error::InvalidInput(format!(
                "bench lengths must be powers of two up to 2^20, got {l}"
            )));
        }
        if self.reps < 5 {
            return Err(Error::InvalidInput("bench needs at least 5 repetitions".into()));
        }
        if self.threads.contains(&0) || self.n == 0 {
            return Err(Error::InvalidInput("threads and n must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub len: usize,
    pub threads: usize,
    pub mode: ExecMode,
    pub median_ns: f64,
}

fn mode_code(mode: ExecMode) -> f64 {
    match mode {
        ExecMode::Sequential => 0.0,
        ExecMode::Parallel => 1.0,
        ExecMode::Tree => 2.0,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median forward time of `mode` on a single-sequence, single-feature LRU.
pub fn time_forward(params: &LruParams, u: &SequenceBatch, mode: ExecMode, reps: usize, warmup: usize) -> Result<f64> {
    for _ in 0..warmup {
        lru_forward(params, u, mode)?;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let out = lru_forward(params, u, mode)?;
        times.push(start.elapsed().as_nanos() as f64);
        std::hint::black_box(out);
    }
    Ok(median(times))
}

/// Times sequential and parallel execution for every `(len, threads)` pair,
/// each inside its own thread pool.
pub fn bench_scan(cfg: &BenchConfig, seed: u64) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let params = lru_init(
        &LruInitConfig::default(),
        LruDims::square(1, cfg.n),
        &mut rng::root(seed),
    )?;
    let mut rows = Vec::new();
    for &len in &cfg.lengths {
        let mut r = rng::stream(seed, 1);
        let u = SequenceBatch::from_fn(1, len, 1, |_, _, _| crate::init::uniform(&mut r, -1.0, 1.0));
        for &threads in &cfg.threads {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            for mode in [ExecMode::Sequential, ExecMode::Parallel] {
                let median_ns = pool.install(|| time_forward(&params, &u, mode, cfg.reps, cfg.warmup))?;
                rows.push(BenchRow {
                    len,
                    threads,
                    mode,
                    median_ns,
                });
            }
        }
    }
    Ok(rows)
}

/// Rows use `mode` codes 0 = sequential, 1 = parallel.
pub fn bench_report(cfg: &BenchConfig, rows: &[BenchRow], seed: u64) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("bench-scan", seed, &BENCH_COLUMNS);
    report.config = serde_json::to_value(cfg)?;
    for r in rows {
        report.push_row(vec![r.len as f64, r.threads as f64, mode_code(r.mode), r.median_ns])?;
    }
    for pair in rows.chunks(2) {
        if let [seq, par] = pair {
            report.metric(
                format!("speedup_l{}_t{}", seq.len, seq.threads),
                seq.median_ns / par.median_ns,
            );
        }
    }
    report.notes.push("mode: 0 = sequential, 1 = parallel".into());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_bench_runs() {
        let cfg = BenchConfig {
            lengths: vec![1, 256],
            threads: vec![1, 2],
            n: 4,
            reps: 5,
            warmup: 1,
        };
        let rows = bench_scan(&cfg, 0).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.median_ns > 0.0));
        let report = bench_report(&cfg, &rows, 0).unwrap();
        assert_eq!(report.header, BENCH_COLUMNS);
        assert!(report.metrics.contains_key("speedup_l256_t2"));
    }

    #[test]
    fn single_thread_overhead_is_bounded() {
        let cfg = BenchConfig {
            lengths: vec![1 << 14],
            threads: vec![1],
            n: 64,
            reps: 5,
            warmup: 1,
        };
        let rows = bench_scan(&cfg, 1).unwrap();
        let ratio = rows[1].median_ns / rows[0].median_ns;
        assert!((1.0 / 3.0..3.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn invalid_lengths_rejected() {
        let cfg = BenchConfig {
            lengths: vec![100],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = BenchConfig {
            reps: 3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
