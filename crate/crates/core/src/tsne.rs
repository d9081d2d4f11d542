//! Exact (O(N²)) t-SNE.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand_distr::{Distribution, Normal};

use crate::math;
use crate::error::{Error, Result};
use crate::rng;

pub const MAX_POINTS: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 4.0,
            exaggeration_iters: 100,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingResult {
    pub coords: Vec<[f64; 2]>,
    /// KL(P‖Q) at the end of optimisation.
    pub kl: f64,
    /// KL(P‖Q) right after early exaggeration was switched off.
    pub kl_after_exaggeration: f64,
    pub iterations: usize,
    pub perplexity: f64,
}

fn squared_distances(data: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = data[i].iter().zip(&data[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = s;
            d[j * n + i] = s;
        }
    }
    d
}

/// Row-conditional probabilities `p_{j|i}` (row-major `n × n`), with each
/// row's Gaussian precision found by bisection so that the row entropy
/// (natural log) equals `ln(perplexity)`.
pub fn conditional_probabilities(data: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>> {
    let n = data.len();
    if perplexity <= 1.0 || !perplexity.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("perplexity {perplexity} must exceed 1")));
    }
    let dist = squared_distances(data);
    let target = math::ln(perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &dist[i * n..(i + 1) * n];
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| row[j])
            .fold(f64::INFINITY, f64::min);
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        let out = &mut p[i * n..(i + 1) * n];
        for _ in 0..200 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    out[j] = 0.0;
                    continue;
                }
                let shifted = row[j] - dmin;
                let v = math::exp(-beta * shifted);
                out[j] = v;
                sum += v;
                weighted += v * shifted;
            }
            let entropy = math::ln(sum) + beta * weighted / sum;
            for v in out.iter_mut() {
                *v /= sum;
            }
            let diff = entropy - target;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
    }
    Ok(p)
}

/// Symmetrised joint probabilities `(p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_probabilities(cond: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
        }
    }
    p
}

/// KL(P‖Q) and its gradient w.r.t. the embedding, with `P` scaled by
/// `exaggeration` in the gradient only.
pub fn kl_and_gradient(p: &[f64], y: &[[f64; 2]], exaggeration: f64) -> (f64, Vec<[f64; 2]>) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    let mut kl = 0.0;
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p[i * n + j];
            let q = (num[i * n + j] / z).max(1e-300);
            if pij > 0.0 {
                kl += pij * math::ln(pij / q);
            }
            let coef = 4.0 * (exaggeration * pij - q) * num[i * n + j];
            grad[i][0] += coef * (y[i][0] - y[j][0]);
            grad[i][1] += coef * (y[i][1] - y[j][1]);
        }
    }
    (kl, grad)
}

pub fn tsne_embed(features: &[Vec<f64>], cfg: &TsneConfig) -> Result<EmbeddingResult> {
    let n = features.len();
    if (n as f64) < 3.0 * cfg.perplexity {
        return Err(Error::InvalidArgument(alloc::format!(
            "t-SNE needs at least 3·perplexity = {} points, got {n}",
            3.0 * cfg.perplexity
        )));
    }
    if n > MAX_POINTS {
        return Err(Error::InvalidArgument(alloc::format!("exact t-SNE limited to {MAX_POINTS} points")));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim || f.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("features must be finite rows of equal length".into()));
    }
    let p = joint_probabilities(&conditional_probabilities(features, cfg.perplexity)?, n);

    let mut r = rng::stream(cfg.seed, &[0x75_4E]);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut r), init.sample(&mut r)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];
    let mut kl_after_exaggeration = f64::NAN;
    let mut kl = f64::NAN;
    for it in 0..cfg.iterations {
        let exaggerating = it < cfg.exaggeration_iters;
        let (k, grad) = kl_and_gradient(&p, &y, if exaggerating { cfg.exaggeration } else { 1.0 });
        if it == cfg.exaggeration_iters {
            kl_after_exaggeration = k;
        }
        kl = k;
        let momentum = if it < cfg.momentum_switch_iter {
            cfg.momentum
        } else {
            cfg.final_momentum
        };
        for i in 0..n {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                gains[i][d] = if same_sign { gains[i][d] * 0.8 } else { gains[i][d] + 0.2 };
                gains[i][d] = gains[i][d].max(0.01);
                update[i][d] = momentum * update[i][d] - cfg.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        let mean = y.iter().fold([0.0; 2], |m, v| [m[0] + v[0], m[1] + v[1]]);
        for v in y.iter_mut() {
            v[0] -= mean[0] / n as f64;
            v[1] -= mean[1] / n as f64;
        }
    }
    if cfg.iterations > 0 {
        kl = kl_and_gradient(&p, &y, 1.0).0;
    }
    if kl_after_exaggeration.is_nan() {
        kl_after_exaggeration = kl;
    }
    if y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(Error::Corrupt("t-SNE embedding diverged".into()));
    }
    Ok(EmbeddingResult {
        coords: y,
        kl: kl.max(0.0),
        kl_after_exaggeration,
        iterations: cfg.iterations,
        perplexity: cfg.perplexity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::silhouette;
    use rand::Rng;

    fn random_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, &[]);
        (0..n).map(|_| (0..dim).map(|_| r.random::<f64>()).collect()).collect()
    }

    fn entropy(row: &[f64]) -> f64 {
        -row.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
    }

    #[test]
    fn rows_sum_to_one_and_hit_target_entropy() {
        let data = random_points(60, 5, 1);
        let cond = conditional_probabilities(&data, 10.0).unwrap();
        for i in 0..60 {
            let row = &cond[i * 60..(i + 1) * 60];
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!((entropy(row) - 10f64.ln()).abs() < 1e-4);
        }
        let p = joint_probabilities(&cond, 60);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let data = random_points(10, 4, seed);
            let p = joint_probabilities(&conditional_probabilities(&data, 3.0).unwrap(), 10);
            let mut r = rng::stream(seed, &[1]);
            let y: Vec<[f64; 2]> = (0..10).map(|_| [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]).collect();
            let (_, grad) = kl_and_gradient(&p, &y, 1.0);
            let h = 1e-6;
            for i in 0..10 {
                for d in 0..2 {
                    let mut plus = y.clone();
                    plus[i][d] += h;
                    let mut minus = y.clone();
                    minus[i][d] -= h;
                    let fd = (kl_and_gradient(&p, &plus, 1.0).0 - kl_and_gradient(&p, &minus, 1.0).0) / (2.0 * h);
                    let rel = (fd - grad[i][d]).abs() / fd.abs().max(grad[i][d].abs()).max(1e-8);
                    assert!(rel < 1e-4, "seed {seed} ({i},{d}): {fd} vs {}", grad[i][d]);
                }
            }
        }
    }

    #[test]
    fn separated_gaussian_clusters_embed_separately() {
        let mut r = rng::stream(3, &[]);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let centers: Vec<Vec<f64>> = (0..3)
            .map(|c| (0..128).map(|d| if d == c { 20.0 / 2f64.sqrt() } else { 0.0 }).collect())
            .collect();
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..40 {
                feats.push(center.iter().map(|m| m + normal.sample(&mut r)).collect());
                labels.push(c);
            }
        }
        let cfg = TsneConfig {
            perplexity: 20.0,
            iterations: 500,
            ..TsneConfig::default()
        };
        let e = tsne_embed(&feats, &cfg).unwrap();
        assert_eq!(e.coords.len(), 120);
        assert!(e.kl <= e.kl_after_exaggeration);
        let pts: Vec<Vec<f64>> = e.coords.iter().map(|c| c.to_vec()).collect();
        let s = silhouette(&pts, &labels).unwrap();
        assert!(s >= 0.5, "silhouette {s}");
        assert_eq!(tsne_embed(&feats, &cfg).unwrap(), e);
    }

    #[test]
    fn too_few_points_rejected() {
        let data = random_points(20, 3, 0);
        assert!(tsne_embed(&data, &TsneConfig::default()).is_err());
    }
}
