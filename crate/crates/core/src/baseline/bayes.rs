//! Gaussian naive Bayes.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::math;
use crate::error::{Error, Result};

/// Added to every per-class variance, as a fraction of the largest
/// feature variance.
pub const VAR_SMOOTHING: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNb {
    pub log_priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianNb {
    pub fn fit(x: &[Vec<f64>], labels: &[usize], classes: usize) -> Result<Self> {
        if x.is_empty() || x.len() != labels.len() {
            return Err(Error::InvalidArgument("naive Bayes needs matching, non-empty data".into()));
        }
        let dim = x[0].len();
        if x.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidArgument("naive Bayes rows differ in length".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidLabel(bad));
        }
        let n = x.len() as f64;
        let overall_mean: Vec<f64> = (0..dim).map(|d| x.iter().map(|r| r[d]).sum::<f64>() / n).collect();
        let max_var = (0..dim)
            .map(|d| x.iter().map(|r| math::powi(r[d] - overall_mean[d], 2)).sum::<f64>() / n)
            .fold(0.0, f64::max);
        let eps = VAR_SMOOTHING * max_var.max(1e-12);

        let mut counts = vec![0usize; classes];
        let mut means = vec![vec![0.0; dim]; classes];
        for (r, &l) in x.iter().zip(labels) {
            counts[l] += 1;
            for (m, v) in means[l].iter_mut().zip(r) {
                *m += v;
            }
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            if c > 0 {
                m.iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        let mut variances = vec![vec![0.0; dim]; classes];
        for (r, &l) in x.iter().zip(labels) {
            for ((s, v), m) in variances[l].iter_mut().zip(r).zip(&means[l]) {
                *s += (v - m) * (v - m);
            }
        }
        for (s, &c) in variances.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|v| *v = *v / (c.max(1) as f64) + eps);
        }
        // Laplace-smoothed priors keep absent classes finite.
        let log_priors = counts
            .iter()
            .map(|&c| math::ln((c as f64 + 1.0) / (n + classes as f64)))
            .collect();
        Ok(Self {
            log_priors,
            means,
            variances,
        })
    }

    /// Normalized log-posteriors.
    pub fn log_posterior(&self, x: &[f64]) -> Vec<f64> {
        let joint: Vec<f64> = (0..self.log_priors.len())
            .map(|c| {
                self.log_priors[c]
                    + x.iter()
                        .zip(&self.means[c])
                        .zip(&self.variances[c])
                        .map(|((v, m), s)| -0.5 * (math::ln(2.0 * core::f64::consts::PI * s) + (v - m) * (v - m) / s))
                        .sum::<f64>()
            })
            .collect();
        let lse = log_sum_exp(&joint);
        joint.iter().map(|j| j - lse).collect()
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + math::ln(v.iter().map(|x| math::exp(x - m)).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_gaussians_and_normalizes() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![if i < 20 { -3.0 } else { 3.0 } + (i % 5) as f64 * 0.1]).collect();
        let y: Vec<usize> = (0..40).map(|i| (i >= 20) as usize).collect();
        let nb = GaussianNb::fit(&x, &y, 3).unwrap();
        let lp = nb.log_posterior(&[-3.0]);
        assert!((lp.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(lp[0] > lp[1]);
        assert!(nb.log_posterior(&[3.2])[1] > -1e-3);
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(GaussianNb::fit(&[vec![0.0]], &[4], 3).is_err());
    }
}
