//! Single-image inference benchmark.

use std::hint::black_box;
use std::time::Instant;

use parasnet_core::eval::{Classifier, LatencyStats};
use parasnet_core::Tensor;

use crate::error::{Error, Result};

pub const MIN_WARMUP: usize = 1;
pub const MIN_ITERS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub model: String,
    pub stats: LatencyStats,
    /// Images per classifier call; always 1 here.
    pub batch_size: usize,
    pub warmup: usize,
    pub iters: usize,
    pub machine: String,
}

/// Times `iters` single-image classifications on the calling thread after
/// `warmup` untimed ones, cycling through `images`.
pub fn benchmark<C: Classifier + ?Sized>(
    name: &str,
    classifier: &C,
    images: &[Tensor<f32>],
    warmup: usize,
    iters: usize,
) -> Result<BenchReport> {
    if images.is_empty() {
        return Err(Error::Invalid("benchmark needs at least one image".into()));
    }
    if warmup < MIN_WARMUP || iters < MIN_ITERS {
        return Err(Error::Invalid(format!(
            "benchmark needs warmup >= {MIN_WARMUP} and iters >= {MIN_ITERS} (got {warmup}, {iters})"
        )));
    }
    for i in 0..warmup {
        black_box(classifier.classify(&images[i % images.len()])?);
    }
    let mut seconds = Vec::with_capacity(iters);
    let total = Instant::now();
    for i in 0..iters {
        let image = &images[i % images.len()];
        let start = Instant::now();
        black_box(classifier.classify(black_box(image))?);
        seconds.push(start.elapsed().as_secs_f64());
    }
    let wall = total.elapsed().as_secs_f64();
    let mut stats = LatencyStats::from_seconds(&seconds)?;
    // Throughput comes from the whole loop's wall time, not the latency mean.
    stats.fps = iters as f64 / wall;
    Ok(BenchReport {
        model: name.to_string(),
        stats,
        batch_size: 1,
        warmup,
        iters,
        machine: machine_descriptor(),
    })
}

/// OS, architecture, logical CPU count and (where readable) the CPU model.
pub fn machine_descriptor() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!(
        "{} {} / {model} / {cpus} logical cpu(s) / 1 benchmark thread",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}
