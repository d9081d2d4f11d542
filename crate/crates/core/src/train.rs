//! End-to-end mini-batch training of ParasNet.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::adam::{AdamConfig, AdamState};
use crate::augment::{augment, AugmentConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ConfusionMatrix};
use crate::exec::{pairwise_sum, Executor};
use crate::loss::{bce_loss, one_hot};
use crate::model::{ParasNet, INPUT_SHAPE};
use crate::rng;
use crate::synth::{Dataset, LabeledImage};
use crate::tensor::{Real, Tensor};
use crate::Mode;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Test-time batch size.
    pub eval_batch_size: usize,
    pub augment: AugmentConfig,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Stop after the first epoch whose test accuracy reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            eval_batch_size: 32,
            augment: AugmentConfig::default(),
            adam: AdamConfig::default(),
            seed: 7,
            target_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Confusion matrix on the test set after the last epoch.
    pub confusion: ConfusionMatrix,
}

impl TrainReport {
    pub fn max_test_accuracy(&self) -> f64 {
        self.epochs.iter().map(|e| e.test_accuracy).fold(0.0, f64::max)
    }

    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.train_loss)
    }
}

/// Hooks for timing and progress; the core has no clock of its own.
pub trait Observer {
    /// Monotonic seconds; used to fill [`EpochStats::seconds`].
    fn now(&self) -> f64 {
        0.0
    }
    fn epoch_done(&mut self, _stats: &EpochStats) {}
}

impl Observer for () {}

const SHUFFLE_STREAM: u64 = 0x5_4F1E;
const SAMPLE_STREAM: u64 = 0xA_0C0E;

/// Loss and flattened parameter gradient for one (augmented) training sample.
pub fn sample_gradient<T: Real>(
    model: &ParasNet<T>,
    sample: &LabeledImage,
    cfg: &TrainConfig,
    epoch: usize,
    index: usize,
) -> Result<(f64, Vec<f64>)> {
    let mut rng = rng::stream(cfg.seed, &[SAMPLE_STREAM, epoch as u64, index as u64]);
    let image = augment(&sample.pixels, &cfg.augment, &mut rng)?.cast::<T>();
    let pass = model.forward_pass(&image, Mode::Train, &mut rng)?;
    let (loss, d_probs) = bce_loss(&pass.output.probs, &one_hot(sample.label))?;
    let grads = model.backward(&pass, &d_probs)?;
    let flat = grads.iter().flat_map(|g| g.data().iter().map(|v| v.f64())).collect();
    Ok((loss.f64(), flat))
}

fn unflatten<T: Real>(flat: &[f64], like: &[Tensor<T>], scale: f64) -> Result<Vec<Tensor<T>>> {
    let mut offset = 0;
    like.iter()
        .map(|p| {
            let n = p.len();
            let data = flat[offset..offset + n].iter().map(|&v| T::of(v * scale)).collect();
            offset += n;
            Tensor::new(p.shape(), data)
        })
        .collect()
}

/// Trains `model` in place and returns the per-epoch report.
///
/// Per-sample gradients may be computed concurrently by `exec`; they are
/// reduced in a fixed pairwise order, so results are independent of the
/// number of workers.
pub fn fit<T: Real, E: Executor, O: Observer>(
    model: &mut ParasNet<T>,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    exec: &E,
    observer: &mut O,
) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if cfg.batch_size == 0 || cfg.eval_batch_size == 0 {
        return Err(Error::InvalidArgument("batch sizes must be at least 1".into()));
    }
    for s in train.samples.iter().chain(&test.samples) {
        s.pixels.expect_shape("training image", &INPUT_SHAPE)?;
    }
    cfg.augment.validate()?;
    let mut adam = AdamState::new(cfg.adam, model.params())?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut confusion = ConfusionMatrix::default();
    for epoch in 0..cfg.epochs {
        let start = observer.now();
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let current: &ParasNet<T> = model;
            let results = exec.map(batch.len(), |i| {
                let idx = batch[i];
                sample_gradient(current, &train.samples[idx], cfg, epoch, idx)
            });
            let results = results.into_iter().collect::<Result<Vec<_>>>()?;
            let (losses, grads): (Vec<f64>, Vec<Vec<f64>>) = results.into_iter().unzip();
            loss_sum += losses.iter().sum::<f64>();
            let total = pairwise_sum(grads).expect("batch is non-empty");
            let mean = unflatten(&total, model.params(), 1.0 / batch.len() as f64)?;
            adam.step(model.params_mut(), &mean)?;
        }
        confusion = evaluate(&*model, test, cfg.eval_batch_size, exec)?;
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len() as f64,
            test_accuracy: confusion.accuracy(),
            seconds: observer.now() - start,
        };
        if !stats.train_loss.is_finite() {
            return Err(Error::Corrupt(alloc::format!("training loss diverged at epoch {}", epoch + 1)));
        }
        observer.epoch_done(&stats);
        let reached = cfg.target_accuracy.is_some_and(|t| stats.test_accuracy >= t);
        epochs.push(stats);
        if reached {
            break;
        }
    }
    Ok(TrainReport { epochs, confusion })
}
