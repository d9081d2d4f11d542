//! CSV outputs. Headers are fixed:
//!
//! | file         | columns                                                      |
//! |--------------|--------------------------------------------------------------|
//! | training     | `epoch,train_loss,test_accuracy,seconds`                     |
//! | confusion    | `actual,others,crypto,giardia` (one row per actual class)    |
//! | sweep        | `filters,params,accuracy`                                    |
//! | embedding    | `x,y,label`                                                  |
//! | benchmark    | `model,fps,mean_ms,p50_ms,p90_ms,p99_ms,batch_size,warmup,iters,machine` |
//!
//! Floats use Rust's shortest round-trip formatting, so equal values always
//! produce equal bytes.

use std::fs;
use std::path::Path;

use parasnet_core::eval::{ConfusionMatrix, SweepRow};
use parasnet_core::train::TrainReport;
use parasnet_core::Class;

use crate::bench::BenchReport;
use crate::error::{Error, Result};

pub const TRAIN_HEADER: [&str; 4] = ["epoch", "train_loss", "test_accuracy", "seconds"];
pub const CONFUSION_HEADER: [&str; 4] = ["actual", "others", "crypto", "giardia"];
pub const SWEEP_HEADER: [&str; 3] = ["filters", "params", "accuracy"];
pub const EMBEDDING_HEADER: [&str; 3] = ["x", "y", "label"];
pub const BENCH_HEADER: [&str; 10] = [
    "model",
    "fps",
    "mean_ms",
    "p50_ms",
    "p90_ms",
    "p99_ms",
    "batch_size",
    "warmup",
    "iters",
    "machine",
];

fn render<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Invalid(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::Invalid(format!("csv encoding failed: {e}")))
}

fn save(path: &Path, bytes: Vec<u8>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn training_csv(report: &TrainReport) -> Result<Vec<u8>> {
    render(
        TRAIN_HEADER,
        report.epochs.iter().map(|e| {
            [
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.test_accuracy.to_string(),
                e.seconds.to_string(),
            ]
        }),
    )
}

pub fn confusion_csv(cm: &ConfusionMatrix) -> Result<Vec<u8>> {
    render(
        CONFUSION_HEADER,
        Class::ALL.iter().map(|c| {
            let r = cm.counts[c.index()];
            [c.name().to_string(), r[0].to_string(), r[1].to_string(), r[2].to_string()]
        }),
    )
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    render(
        SWEEP_HEADER,
        rows.iter()
            .map(|r| [r.filters.to_string(), r.params.to_string(), r.max_test_accuracy.to_string()]),
    )
}

pub fn embedding_csv(coords: &[[f64; 2]], labels: &[Class]) -> Result<Vec<u8>> {
    if coords.len() != labels.len() {
        return Err(Error::Invalid(format!("{} coordinates for {} labels", coords.len(), labels.len())));
    }
    render(
        EMBEDDING_HEADER,
        coords
            .iter()
            .zip(labels)
            .map(|(p, l)| [p[0].to_string(), p[1].to_string(), l.name().to_string()]),
    )
}

pub fn bench_csv(reports: &[BenchReport]) -> Result<Vec<u8>> {
    render(
        BENCH_HEADER,
        reports.iter().map(|r| {
            [
                r.model.clone(),
                r.stats.fps.to_string(),
                r.stats.mean_ms.to_string(),
                r.stats.p50_ms.to_string(),
                r.stats.p90_ms.to_string(),
                r.stats.p99_ms.to_string(),
                r.batch_size.to_string(),
                r.warmup.to_string(),
                r.iters.to_string(),
                r.machine.clone(),
            ]
        }),
    )
}

pub fn write_csv(path: &Path, bytes: Result<Vec<u8>>) -> Result<()> {
    save(path, bytes?)
}
