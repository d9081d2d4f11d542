//! Confusion matrices, the filter-count sweep, cluster separation and
//! latency statistics.

use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::model::{expected_param_count, ParasNet};
use crate::synth::Dataset;
use crate::tensor::{Real, Tensor};
use crate::train::{fit, Observer, TrainConfig, TrainReport};
use crate::Class;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: Class,
    pub probs: [f64; 3],
}

impl Prediction {
    /// Argmax with ties resolved to the lowest class index.
    pub fn from_probs(probs: [f64; 3]) -> Self {
        let mut best = 0;
        for i in 1..3 {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        Self {
            class: Class::ALL[best],
            probs,
        }
    }
}

/// Anything that maps a `[h, w, 1]` image to class probabilities.
pub trait Classifier: Sync {
    fn classify(&self, image: &Tensor<f32>) -> Result<Prediction>;
}

impl<T: Real> Classifier for ParasNet<T> {
    fn classify(&self, image: &Tensor<f32>) -> Result<Prediction> {
        let out = self.infer(&image.cast::<T>())?;
        let p = out.probs.data();
        Ok(Prediction::from_probs([p[0].f64(), p[1].f64(), p[2].f64()]))
    }
}

/// Rows are actual classes, columns predicted, both in (Others, Crypto, Giardia) order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_rows(counts: [[u64; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn record(&mut self, actual: Class, predicted: Class) {
        self.counts[actual.index()][predicted.index()] += 1;
    }

    pub fn row_sums(&self) -> [u64; 3] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    /// Overall accuracy; zero for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Misclassified samples per actual class.
    pub fn false_detections(&self) -> [u64; 3] {
        let rows = self.row_sums();
        [0, 1, 2].map(|i| rows[i] - self.counts[i][i])
    }
}

/// Diagonal count over row sum for each class.
pub fn per_class_accuracy(cm: &ConfusionMatrix) -> Result<[f64; 3]> {
    let rows = cm.row_sums();
    if let Some(i) = rows.iter().position(|&r| r == 0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "no samples of class {} in confusion matrix",
            Class::ALL[i].name()
        )));
    }
    Ok([0, 1, 2].map(|i| cm.counts[i][i] as f64 / rows[i] as f64))
}

/// Runs `clf` over `test` in chunks of `batch_size`.
pub fn evaluate<C: Classifier + ?Sized, E: Executor>(
    clf: &C,
    test: &Dataset,
    batch_size: usize,
    exec: &E,
) -> Result<ConfusionMatrix> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for batch in test.samples.chunks(batch_size) {
        let preds = exec.map(batch.len(), |i| clf.classify(&batch[i].pixels));
        for (sample, pred) in batch.iter().zip(preds) {
            cm.record(sample.label, pred?.class);
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub filters: usize,
    pub params: usize,
    pub max_test_accuracy: f64,
}

/// One sweep entry together with the model and report it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub row: SweepRow,
    pub report: TrainReport,
    pub model: ParasNet<f32>,
}

/// Trains one model per filter count with identical seeds and configuration
/// and records each model's best test accuracy across epochs.
pub fn filter_sweep<E: Executor, O: Observer>(
    filter_counts: &[usize],
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    exec: &E,
    observer: &mut O,
) -> Result<Vec<SweepRun>> {
    if filter_counts.is_empty() {
        return Err(Error::Empty("filter list"));
    }
    if filter_counts.windows(2).any(|w| w[0] >= w[1]) || filter_counts[0] == 0 {
        return Err(Error::InvalidArgument("filter counts must be positive and ascending".into()));
    }
    filter_counts
        .iter()
        .map(|&f| {
            let mut model = ParasNet::<f32>::build(f, cfg.seed)?;
            let report = fit(&mut model, train, test, cfg, exec, observer)?;
            Ok(SweepRun {
                row: SweepRow {
                    filters: f,
                    params: expected_param_count(f),
                    max_test_accuracy: report.max_test_accuracy(),
                },
                report,
                model,
            })
        })
        .collect()
}

/// Mean silhouette coefficient of `points` (rows of equal length) under
/// Euclidean distance. Singleton clusters contribute 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() || points.len() < 2 {
        return Err(Error::InvalidArgument("silhouette needs ≥2 labelled points".into()));
    }
    let k = labels.iter().max().copied().unwrap_or(0) + 1;
    let mut sizes = alloc::vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::InvalidArgument("silhouette needs at least two clusters".into()));
    }
    let dist = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt() };
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut sums = alloc::vec![0.0; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[labels[j]] += dist(p, q);
            }
        }
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / points.len() as f64)
}

/// Latency summary over per-image timings in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub fps: f64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
}

/// Nearest-rank percentile of sorted data (`q` in `[0, 1]`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencyStats {
    pub fn from_seconds(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("latency samples"));
        }
        let mut ms: Vec<f64> = samples.iter().map(|s| s * 1e3).collect();
        ms.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
        let mean_ms = ms.iter().sum::<f64>() / ms.len() as f64;
        Ok(Self {
            fps: if mean_ms > 0.0 { 1e3 / mean_ms } else { f64::INFINITY },
            mean_ms,
            p50_ms: percentile(&ms, 0.5),
            p90_ms: percentile(&ms, 0.9),
            p99_ms: percentile(&ms, 0.99),
        })
    }
}
