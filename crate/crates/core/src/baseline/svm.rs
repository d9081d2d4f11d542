//! One-vs-rest linear SVMs (Pegasos subgradient descent) with Platt-calibrated
//! probabilities.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;

use crate::math;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    /// L2 regularization strength.
    pub lambda: f64,
    /// Passes over the training set.
    pub epochs: usize,
    /// Fraction of samples held out to fit the Platt sigmoids.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 40,
            holdout_fraction: 0.2,
            seed: 7,
        }
    }
}

/// `P(y = +1 | f) = 1 / (1 + exp(a·f + b))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
}

impl Platt {
    pub fn probability(&self, score: f64) -> f64 {
        let z = self.a * score + self.b;
        if z >= 0.0 {
            let e = math::exp(-z);
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + math::exp(z))
        }
    }
}

/// Result of fitting a sigmoid, with the objective after every accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlattFit {
    pub platt: Platt,
    pub nll_history: Vec<f64>,
}

fn platt_nll(scores: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&f, &t)| {
            let z = f * a + b;
            if z >= 0.0 {
                t * z + math::ln_1p(math::exp(-z))
            } else {
                (t - 1.0) * z + math::ln_1p(math::exp(z))
            }
        })
        .sum()
}

/// Fits a Platt sigmoid by damped Newton iterations with backtracking on
/// the regularized-target negative log-likelihood.
pub fn fit_platt(scores: &[f64], positive: &[bool]) -> Result<PlattFit> {
    if scores.len() != positive.len() || scores.is_empty() {
        return Err(Error::InvalidArgument("Platt fit needs matching, non-empty scores and labels".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();

    let (max_iter, min_step, sigma, eps) = (100, 1e-10, 1e-12, 1e-5);
    let mut a = 0.0;
    let mut b = math::ln((n_neg + 1.0) / (n_pos + 1.0));
    let mut fval = platt_nll(scores, &targets, a, b);
    let mut history = vec![fval];
    for _ in 0..max_iter {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (&f, &t) in scores.iter().zip(&targets) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = math::exp(-z);
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = math::exp(z);
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < eps && g2.abs() < eps {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= min_step {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = platt_nll(scores, &targets, na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                history.push(fval);
                break;
            }
            step /= 2.0;
        }
        if step < min_step {
            break;
        }
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite { op: "Platt fit" });
    }
    Ok(PlattFit {
        platt: Platt { a, b },
        nll_history: history,
    })
}

/// Binary linear SVM: `score(x) = w·x + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearSvm {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

/// Pegasos on the hinge loss with a constant bias feature. Returns the
/// average of the iterates from the second half of training.
pub fn train_binary(x: &[Vec<f64>], positive: &[bool], cfg: &SvmConfig, stream: u64) -> LinearSvm {
    let dim = x[0].len();
    let mut w = vec![0.0; dim + 1];
    let mut avg = vec![0.0; dim + 1];
    let mut averaged = 0usize;
    let mut order: Vec<usize> = (0..x.len()).collect();
    let total = cfg.epochs * x.len();
    let mut t = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.seed, &[0x5B, stream, epoch as u64]));
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let y = if positive[i] { 1.0 } else { -1.0 };
            let margin = y * (w[..dim].iter().zip(&x[i]).map(|(a, b)| a * b).sum::<f64>() + w[dim]);
            let shrink = 1.0 - eta * cfg.lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (wv, xv) in w[..dim].iter_mut().zip(&x[i]) {
                    *wv += eta * y * xv;
                }
                w[dim] += eta * y;
            }
            if 2 * t > total {
                averaged += 1;
                let k = averaged as f64;
                for (a, v) in avg.iter_mut().zip(&w) {
                    *a += (v - *a) / k;
                }
            }
        }
    }
    let final_w = if averaged > 0 { avg } else { w };
    LinearSvm {
        weights: final_w[..dim].to_vec(),
        bias: final_w[dim],
    }
}

/// One linear SVM and one Platt sigmoid per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSvmModel {
    pub machines: Vec<LinearSvm>,
    pub platt: Vec<Platt>,
}

/// Training output including per-class Platt NLL histories.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmTraining {
    pub model: ScoredSvmModel,
    pub platt_nll: Vec<Vec<f64>>,
}

impl ScoredSvmModel {
    pub fn classes(&self) -> usize {
        self.machines.len()
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.machines.iter().map(|m| m.score(x)).collect()
    }

    /// Calibrated one-vs-rest probabilities, normalized to sum to one.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let raw: Vec<f64> = self
            .machines
            .iter()
            .zip(&self.platt)
            .map(|(m, p)| p.probability(m.score(x)).max(1e-300))
            .collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    }
}

pub fn train_scored_svm(x: &[Vec<f64>], labels: &[usize], classes: usize, cfg: &SvmConfig) -> Result<SvmTraining> {
    if x.is_empty() || x.len() != labels.len() {
        return Err(Error::InvalidArgument("SVM needs matching, non-empty features and labels".into()));
    }
    let dim = x[0].len();
    if dim == 0 || x.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("SVM features must be finite rows of equal length".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidLabel(bad));
    }
    let mut present = vec![false; classes];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::InvalidArgument("SVM training needs at least two classes".into()));
    }
    if !(cfg.lambda > 0.0) || cfg.epochs == 0 || !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(Error::InvalidArgument("invalid SVM configuration".into()));
    }

    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.shuffle(&mut rng::stream(cfg.seed, &[0x401D]));
    let n_hold = ((x.len() as f64) * cfg.holdout_fraction).round() as usize;
    let (hold, fit_idx) = if n_hold >= 2 && x.len() - n_hold >= 2 {
        idx.split_at(n_hold)
    } else {
        (&idx[..], &idx[..])
    };
    let fit_x: Vec<Vec<f64>> = fit_idx.iter().map(|&i| x[i].clone()).collect();

    let mut platt = Vec::with_capacity(classes);
    let mut platt_nll = Vec::with_capacity(classes);
    let mut machines = Vec::with_capacity(classes);
    for c in 0..classes {
        let fit_pos: Vec<bool> = fit_idx.iter().map(|&i| labels[i] == c).collect();
        let held = train_binary(&fit_x, &fit_pos, cfg, c as u64);
        let scores: Vec<f64> = hold.iter().map(|&i| held.score(&x[i])).collect();
        let hold_pos: Vec<bool> = hold.iter().map(|&i| labels[i] == c).collect();
        let fit = fit_platt(&scores, &hold_pos)?;
        platt.push(fit.platt);
        platt_nll.push(fit.nll_history);

        let all_pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        machines.push(train_binary(x, &all_pos, cfg, c as u64));
    }
    Ok(SvmTraining {
        model: ScoredSvmModel { machines, platt },
        platt_nll,
    })
}
