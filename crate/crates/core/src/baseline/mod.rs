//! Hand-crafted baseline: SIFT descriptors, a bag-of-visual-words histogram,
//! Platt-calibrated linear SVMs and a naive Bayes tie-breaker.
//!
//! Model file layout (little-endian):
//!
//! ```text
//! "PBSL" | u32 version = 1 | u32 k | u32 classes
//! | f32 × k·128 centroids
//! | f64 × k feature means | f64 × k feature scales
//! | per class: f64 × k weights, f64 bias, f64 platt_a, f64 platt_b
//! | f64 × classes NB log-priors | f64 × classes·k NB means | f64 × classes·k NB variances
//! | f64 nb_gap | SiftConfig (f64 sigma0, u32 scales, f32 contrast, f32 edge, f64 blur, u32 min_side)
//! ```

pub mod bayes;
pub mod kmeans;
pub mod sift;
pub mod svm;

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::checkpoint::ByteReader;
use crate::error::{Error, Result};
use crate::eval::{Classifier, Prediction};
use crate::exec::Executor;
use crate::image::Plane;
use crate::rng;
use crate::synth::Dataset;
use crate::tensor::Tensor;
use crate::Class;

pub use bayes::GaussianNb;
pub use kmeans::{build_codebook, BowCodebook, KMeansTrace};
pub use sift::{Descriptor, Keypoint, SiftConfig, DESCRIPTOR_LEN};
pub use svm::{train_scored_svm, Platt, ScoredSvmModel, SvmConfig};

pub const MAGIC: [u8; 4] = *b"PBSL";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub sift: SiftConfig,
    pub codebook_size: usize,
    /// At most this many descriptors (sampled without replacement) feed k-means.
    pub codebook_sample: usize,
    pub svm: SvmConfig,
    /// Naive Bayes is consulted when the SVM's top-two probability gap is below this.
    pub nb_gap: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            sift: SiftConfig::default(),
            codebook_size: 64,
            codebook_sample: 20_000,
            svm: SvmConfig::default(),
            nb_gap: 0.2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub sift: SiftConfig,
    pub codebook: BowCodebook,
    /// Per-dimension standardization applied to histograms before SVM and NB.
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub svm: ScoredSvmModel,
    pub nb: GaussianNb,
    pub nb_gap: f64,
}

/// Diagnostics gathered while training.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTraining {
    pub model: BaselineModel,
    pub kmeans: KMeansTrace,
    pub platt_nll: Vec<Vec<f64>>,
    pub descriptors: usize,
    pub zero_keypoint_images: usize,
}

/// Preprocessed SIFT descriptors of a `[h, w, 1]` image.
pub fn image_descriptors(image: &Tensor<f32>, cfg: &SiftConfig) -> Result<Vec<Descriptor>> {
    let plane = sift::preprocess(&Plane::from_tensor(image)?);
    Ok(sift::extract(&plane, cfg)?.into_iter().map(|(_, d)| d).collect())
}

/// L1-normalized word histogram; the flag is raised (and the vector is all
/// zeros) when the image has no keypoints.
pub fn bow_histogram(image: &Tensor<f32>, codebook: &BowCodebook, cfg: &SiftConfig) -> Result<(Tensor<f64>, bool)> {
    let descriptors = image_descriptors(image, cfg)?;
    Ok(histogram_of(&descriptors, codebook))
}

fn histogram_of(descriptors: &[Descriptor], codebook: &BowCodebook) -> (Tensor<f64>, bool) {
    match codebook.histogram(descriptors) {
        Some(h) => (Tensor::vector(h), false),
        None => (Tensor::zeros([codebook.k()]), true),
    }
}

pub fn train_baseline<E: Executor>(train: &Dataset, cfg: &BaselineConfig, exec: &E) -> Result<BaselineTraining> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let per_image = exec.map(train.len(), |i| image_descriptors(&train.samples[i].pixels, &cfg.sift));
    let per_image = per_image.into_iter().collect::<Result<Vec<_>>>()?;

    let mut pool: Vec<&Descriptor> = per_image.iter().flatten().collect();
    let descriptors = pool.len();
    if pool.len() > cfg.codebook_sample {
        pool.shuffle(&mut rng::stream(cfg.seed, &[0xB0_B0]));
        pool.truncate(cfg.codebook_sample);
    }
    let pool: Vec<Descriptor> = pool.into_iter().copied().collect();
    let (codebook, kmeans) = build_codebook(&pool, cfg.codebook_size, cfg.seed)?;

    let hists = exec.map(per_image.len(), |i| histogram_of(&per_image[i], &codebook));
    let zero_keypoint_images = hists.iter().filter(|(_, f)| *f).count();
    let raw: Vec<Vec<f64>> = hists.into_iter().map(|(h, _)| h.into_data()).collect();
    let k = codebook.k();
    let n = raw.len() as f64;
    let feature_mean: Vec<f64> = (0..k).map(|d| raw.iter().map(|r| r[d]).sum::<f64>() / n).collect();
    let feature_scale: Vec<f64> = (0..k)
        .map(|d| {
            let var = raw.iter().map(|r| (r[d] - feature_mean[d]) * (r[d] - feature_mean[d])).sum::<f64>() / n;
            if var > 1e-18 {
                libm::sqrt(var)
            } else {
                1.0
            }
        })
        .collect();
    let x: Vec<Vec<f64>> = raw.iter().map(|r| standardize(r, &feature_mean, &feature_scale)).collect();
    let labels: Vec<usize> = train.samples.iter().map(|s| s.label.index()).collect();

    let svm = train_scored_svm(&x, &labels, Class::COUNT, &cfg.svm)?;
    let nb = GaussianNb::fit(&x, &labels, Class::COUNT)?;
    Ok(BaselineTraining {
        model: BaselineModel {
            sift: cfg.sift,
            codebook,
            feature_mean,
            feature_scale,
            svm: svm.model,
            nb,
            nb_gap: cfg.nb_gap,
        },
        kmeans,
        platt_nll: svm.platt_nll,
        descriptors,
        zero_keypoint_images,
    })
}

fn standardize(h: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    h.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect()
}

impl BaselineModel {
    fn check(&self) -> Result<()> {
        let k = self.codebook.k();
        let ok = k >= 2
            && self.feature_mean.len() == k
            && self.feature_scale.len() == k
            && self.svm.classes() == Class::COUNT
            && self.svm.platt.len() == Class::COUNT
            && self.svm.machines.iter().all(|m| m.weights.len() == k)
            && self.nb.log_priors.len() == Class::COUNT;
        if ok {
            Ok(())
        } else {
            Err(Error::Untrained("baseline model"))
        }
    }

    /// Class probabilities from a raw (unstandardized) histogram.
    pub fn classify_histogram(&self, hist: &[f64], no_keypoints: bool) -> Result<Prediction> {
        self.check()?;
        if no_keypoints {
            return Ok(Prediction::from_probs([1.0, 0.0, 0.0]));
        }
        let x = standardize(hist, &self.feature_mean, &self.feature_scale);
        let p = self.svm.probabilities(&x);
        let mut sorted = p.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
        let probs = if sorted[0] - sorted[1] < self.nb_gap {
            let nb = self.nb.log_posterior(&x);
            let avg: Vec<f64> = p.iter().zip(&nb).map(|(s, b)| 0.5 * (libm::log(s.max(1e-300)) + b)).collect();
            let lse = bayes::log_sum_exp(&avg);
            avg.iter().map(|v| libm::exp(v - lse)).collect()
        } else {
            p
        };
        Ok(Prediction::from_probs([probs[0], probs[1], probs[2]]))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&MAGIC);
        w.u32(VERSION);
        w.u32(self.codebook.k() as u32);
        w.u32(self.svm.classes() as u32);
        for c in &self.codebook.centroids {
            c.iter().for_each(|&v| w.f32(v));
        }
        w.f64s(&self.feature_mean);
        w.f64s(&self.feature_scale);
        for (m, p) in self.svm.machines.iter().zip(&self.svm.platt) {
            w.f64s(&m.weights);
            w.f64s(&[m.bias, p.a, p.b]);
        }
        w.f64s(&self.nb.log_priors);
        self.nb.means.iter().for_each(|m| w.f64s(m));
        self.nb.variances.iter().for_each(|v| w.f64s(v));
        w.f64s(&[self.nb_gap, self.sift.sigma0]);
        w.u32(self.sift.scales_per_octave as u32);
        w.f32(self.sift.contrast_threshold);
        w.f32(self.sift.edge_ratio);
        w.f64s(&[self.sift.assumed_blur]);
        w.u32(self.sift.min_octave_side as u32);
        w.0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let k = r.u32("codebook size")? as usize;
        let classes = r.u32("class count")? as usize;
        if !(2..=4096).contains(&k) || classes != Class::COUNT {
            return Err(Error::Corrupt(alloc::format!("implausible header k={k} classes={classes}")));
        }
        let flat = r.f32s(k * DESCRIPTOR_LEN, "codebook")?;
        let centroids = flat
            .chunks_exact(DESCRIPTOR_LEN)
            .map(|c| c.try_into().expect("128 values"))
            .collect();
        let feature_mean = r.f64s(k, "feature means")?;
        let feature_scale = r.f64s(k, "feature scales")?;
        let mut machines = Vec::with_capacity(classes);
        let mut platt = Vec::with_capacity(classes);
        for _ in 0..classes {
            let weights = r.f64s(k, "svm weights")?;
            let t = r.f64s(3, "svm bias and calibration")?;
            machines.push(svm::LinearSvm { weights, bias: t[0] });
            platt.push(Platt { a: t[1], b: t[2] });
        }
        let log_priors = r.f64s(classes, "naive Bayes priors")?;
        let mut means = vec![];
        for _ in 0..classes {
            means.push(r.f64s(k, "naive Bayes means")?);
        }
        let mut variances = vec![];
        for _ in 0..classes {
            variances.push(r.f64s(k, "naive Bayes variances")?);
        }
        let t = r.f64s(2, "settings")?;
        let scales_per_octave = r.u32("settings")? as usize;
        let contrast_threshold = f32::from_bits(r.u32("settings")?);
        let edge_ratio = f32::from_bits(r.u32("settings")?);
        let assumed_blur = r.f64s(1, "settings")?[0];
        let min_octave_side = r.u32("settings")? as usize;
        r.finish()?;
        let model = Self {
            sift: SiftConfig {
                sigma0: t[1],
                scales_per_octave,
                contrast_threshold,
                edge_ratio,
                assumed_blur,
                min_octave_side,
            },
            codebook: BowCodebook { centroids },
            feature_mean,
            feature_scale,
            svm: ScoredSvmModel { machines, platt },
            nb: GaussianNb {
                log_priors,
                means,
                variances,
            },
            nb_gap: t[0],
        };
        let finite = model.codebook.centroids.iter().flatten().all(|v| v.is_finite())
            && model.feature_scale.iter().all(|v| v.is_finite() && *v > 0.0)
            && model.nb.variances.iter().flatten().all(|v| v.is_finite() && *v > 0.0);
        if !finite || scales_per_octave == 0 || !(model.sift.sigma0 > 0.0) {
            return Err(Error::Corrupt("baseline model contains invalid values".into()));
        }
        Ok(model)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.0.extend_from_slice(&x.to_le_bytes()));
    }
}

/// Full pipeline: preprocess, SIFT, histogram, SVM, optional NB refinement.
pub fn classify_baseline(image: &Tensor<f32>, model: &BaselineModel) -> Result<Prediction> {
    model.check()?;
    let (hist, empty) = bow_histogram(image, &model.codebook, &model.sift)?;
    model.classify_histogram(hist.data(), empty)
}

impl Classifier for BaselineModel {
    fn classify(&self, image: &Tensor<f32>) -> Result<Prediction> {
        classify_baseline(image, self)
    }
}
