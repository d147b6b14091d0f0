//! Single-sample latency harness for dense and compiled sparse models.
//!
//! Every timed call is one forward pass on one sample with preallocated
//! scratch, measured with the monotonic clock. Models are timed in
//! interleaved blocks so slow drift (frequency scaling, other load) hits all
//! of them alike.

use std::hint::black_box;
use std::time::{Duration, Instant};

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::metrics::Scorer;
use crate::model::{count_parameters, flops_estimate, DenseScratch, Model};
use crate::pruning::{sparsity_report, SparsityReport};
use crate::sparse::{SparseModel, SparseScratch};

/// Below this many repetitions the numbers are flagged as not reportable.
pub const MIN_REPORTABLE_REPETITIONS: usize = 30;

const BLOCK: usize = 50;

pub const CSV_HEADER: &str =
    "model_name,sparsity_dnn,sparsity_R,sparsity_emb,mean_ms,median_ms,p99_ms,speedup,params_nnz,flops_est";

#[derive(Debug, Clone, Copy)]
pub enum BenchModel<'a> {
    Dense(&'a Model),
    Sparse(&'a SparseModel),
}

impl BenchModel<'_> {
    pub fn sparsity(&self) -> SparsityReport {
        match self {
            BenchModel::Dense(m) => sparsity_report(m),
            BenchModel::Sparse(m) => m.sparsity_report(),
        }
    }

    pub fn params_nnz(&self) -> u64 {
        match self {
            BenchModel::Dense(m) => count_parameters(m).total().nonzero,
            BenchModel::Sparse(m) => m.params_nnz(),
        }
    }

    /// Multiply-adds per sample for the path this model executes. The dense
    /// path touches every weight regardless of zeros.
    pub fn flops(&self) -> u64 {
        match self {
            BenchModel::Dense(m) => flops_estimate(&m.config).exact_total(),
            BenchModel::Sparse(m) => m.flops().exact_total(),
        }
    }
}

enum Runner<'a> {
    Dense(&'a Model, DenseScratch),
    Sparse(&'a SparseModel, SparseScratch),
}

impl Runner<'_> {
    #[inline]
    fn run(&mut self, s: &Sample) -> Result<f64> {
        match self {
            Runner::Dense(m, scratch) => m.logit_with(s, scratch),
            Runner::Sparse(m, scratch) => m.logit_with(s, scratch),
        }
    }
}

fn runner<'a>(m: &BenchModel<'a>) -> Runner<'a> {
    match *m {
        BenchModel::Dense(d) => Runner::Dense(d, Scorer::scratch(d)),
        BenchModel::Sparse(s) => Runner::Sparse(s, Scorer::scratch(s)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub repetitions: usize,
    pub warmup: usize,
}

impl LatencyStats {
    /// Summaries of raw per-call durations in nanoseconds.
    pub fn from_nanos(nanos: &mut [u64], warmup: usize) -> Self {
        assert!(!nanos.is_empty());
        nanos.sort_unstable();
        let n = nanos.len();
        let ms = |x: f64| x / 1e6;
        let mean = nanos.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            nanos[n / 2] as f64
        } else {
            (nanos[n / 2 - 1] as f64 + nanos[n / 2] as f64) / 2.0
        };
        let p99 = nanos[(n * 99).div_ceil(100) - 1] as f64;
        LatencyStats {
            // A call shorter than the clock tick reads as 0; floor at 1 ns.
            mean_ms: ms(mean.max(1.0)),
            median_ms: ms(median.max(1.0)),
            p99_ms: ms(p99.max(1.0)),
            repetitions: n,
            warmup,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub name: String,
    pub stats: LatencyStats,
    pub baseline: String,
    /// Baseline median over this model's median.
    pub speedup: f64,
    pub sparsity: SparsityReport,
    pub params_nnz: u64,
    pub flops_est: u64,
}

impl LatencyReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{},{}",
            self.name,
            self.sparsity.dnn.sparsity(),
            self.sparsity.field_matrix.sparsity(),
            self.sparsity.embeddings.sparsity(),
            self.stats.mean_ms,
            self.stats.median_ms,
            self.stats.p99_ms,
            self.speedup,
            self.params_nnz,
            self.flops_est
        )
    }
}

/// Time `repetitions` single-sample forwards per model after `warmup`
/// untimed ones. The first model is the speedup baseline.
pub fn bench_latency(
    models: &[(&str, BenchModel<'_>)],
    samples: &[Sample],
    repetitions: usize,
    warmup: usize,
) -> Result<Vec<LatencyReport>> {
    if models.is_empty() {
        return Err(Error::Input("no models to benchmark".into()));
    }
    if samples.is_empty() {
        return Err(Error::Input("no samples to benchmark on".into()));
    }
    if repetitions == 0 {
        return Err(Error::Input("repetitions must be >= 1".into()));
    }
    if repetitions < MIN_REPORTABLE_REPETITIONS {
        log::warn!(
            "{repetitions} repetitions is below {MIN_REPORTABLE_REPETITIONS}; latency numbers are not reportable"
        );
    }
    let mut runners: Vec<Runner> = models.iter().map(|(_, m)| runner(m)).collect();
    for r in runners.iter_mut() {
        for i in 0..warmup {
            black_box(r.run(&samples[i % samples.len()])?);
        }
    }
    let mut nanos: Vec<Vec<u64>> = vec![Vec::with_capacity(repetitions); runners.len()];
    let mut done = 0;
    while done < repetitions {
        let block = BLOCK.min(repetitions - done);
        for (r, out) in runners.iter_mut().zip(nanos.iter_mut()) {
            for i in done..done + block {
                let s = &samples[i % samples.len()];
                let t = Instant::now();
                let y = r.run(s);
                let dt = t.elapsed();
                black_box(y?);
                out.push(dt.as_nanos() as u64);
            }
        }
        done += block;
    }
    let stats: Vec<LatencyStats> = nanos.iter_mut().map(|n| LatencyStats::from_nanos(n, warmup)).collect();
    let base = stats[0].median_ms;
    Ok(models
        .iter()
        .zip(stats)
        .map(|((name, m), s)| LatencyReport {
            name: name.to_string(),
            speedup: base / s.median_ms,
            stats: s,
            baseline: models[0].0.to_string(),
            sparsity: m.sparsity(),
            params_nnz: m.params_nnz(),
            flops_est: m.flops(),
        })
        .collect())
}

/// Aggregate queries per second with `threads` independent scorers sharing
/// one model. Reported separately from single-sample latency.
pub fn bench_throughput(model: BenchModel<'_>, samples: &[Sample], threads: usize, per_thread: usize) -> Result<f64> {
    if threads == 0 || per_thread == 0 || samples.is_empty() {
        return Err(Error::Input("throughput needs threads, requests, and samples".into()));
    }
    let start = Instant::now();
    let results: Vec<Result<()>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                scope.spawn(move || {
                    let mut r = runner(&model);
                    for i in 0..per_thread {
                        black_box(r.run(&samples[(t * per_thread + i) % samples.len()])?);
                    }
                    Ok(())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("bench worker panicked")).collect()
    });
    let elapsed = start.elapsed().max(Duration::from_nanos(1));
    for r in results {
        r?;
    }
    Ok((threads * per_thread) as f64 / elapsed.as_secs_f64())
}
