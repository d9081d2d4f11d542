//! Visual-word codebook: Lloyd k-means with k-means++ seeding.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::sift::{Descriptor, DESCRIPTOR_LEN};
use crate::error::{Error, Result};
use crate::rng;

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct BowCodebook {
    pub centroids: Vec<[f32; DESCRIPTOR_LEN]>,
}

/// Sum of squared distances after each assignment step.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansTrace {
    pub objective: Vec<f64>,
}

fn sq_dist(a: &[f32; DESCRIPTOR_LEN], b: &[f32; DESCRIPTOR_LEN]) -> f64 {
    a.iter().zip(b).map(|(x, y)| ((x - y) * (x - y)) as f64).sum()
}

impl BowCodebook {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Index of and squared distance to the closest centroid (first on ties).
    pub fn nearest(&self, d: &[f32; DESCRIPTOR_LEN]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centroids.iter().enumerate() {
            let dist = sq_dist(d, c);
            if dist < best.1 {
                best = (i, dist);
            }
        }
        best
    }

    /// L1-normalized word histogram; `None` when there are no descriptors.
    pub fn histogram(&self, descriptors: &[Descriptor]) -> Option<Vec<f64>> {
        if descriptors.is_empty() {
            return None;
        }
        let mut h = vec![0.0; self.k()];
        for d in descriptors {
            h[self.nearest(&d.0).0] += 1.0;
        }
        let n = descriptors.len() as f64;
        h.iter_mut().for_each(|v| *v /= n);
        Some(h)
    }
}

fn plus_plus_seed<R: Rng + ?Sized>(data: &[Descriptor], k: usize, rng: &mut R) -> Vec<[f32; DESCRIPTOR_LEN]> {
    let mut centroids = Vec::with_capacity(k);
    let mut chosen = vec![false; data.len()];
    let first = rng.random_range(0..data.len());
    chosen[first] = true;
    centroids.push(data[first].0);
    let mut d2: Vec<f64> = data.iter().map(|d| sq_dist(&d.0, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            while d2[idx] == 0.0 {
                idx -= 1;
            }
            idx
        } else {
            chosen.iter().position(|&c| !c).expect("at least k descriptors")
        };
        chosen[pick] = true;
        let c = data[pick].0;
        for (w, d) in d2.iter_mut().zip(data) {
            *w = w.min(sq_dist(&d.0, &c));
        }
        centroids.push(c);
    }
    centroids
}

pub fn build_codebook(descriptors: &[Descriptor], k: usize, seed: u64) -> Result<(BowCodebook, KMeansTrace)> {
    if k < 2 {
        return Err(Error::InvalidArgument("codebook needs k ≥ 2".into()));
    }
    if descriptors.len() < k {
        return Err(Error::InvalidArgument(alloc::format!(
            "k-means needs at least k = {k} descriptors, got {}",
            descriptors.len()
        )));
    }
    let mut rng = rng::stream(seed, &[0xC0DE]);
    let mut book = BowCodebook {
        centroids: plus_plus_seed(descriptors, k, &mut rng),
    };
    let mut trace = KMeansTrace { objective: Vec::new() };
    let mut assign = vec![0usize; descriptors.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut objective = 0.0;
        for (a, d) in assign.iter_mut().zip(descriptors) {
            let (i, dist) = book.nearest(&d.0);
            *a = i;
            objective += dist;
        }
        let prev = trace.objective.last().copied();
        trace.objective.push(objective);
        if let Some(p) = prev {
            if p <= 0.0 || (p - objective).abs() / p < TOLERANCE {
                break;
            }
        }
        let mut sums = vec![[0.0f64; DESCRIPTOR_LEN]; k];
        let mut counts = vec![0usize; k];
        for (&a, d) in assign.iter().zip(descriptors) {
            counts[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(&d.0) {
                *s += v as f64;
            }
        }
        for ((c, s), &n) in book.centroids.iter_mut().zip(&sums).zip(&counts) {
            if n > 0 {
                for (cv, &sv) in c.iter_mut().zip(s) {
                    *cv = (sv / n as f64) as f32;
                }
            }
        }
        if objective == 0.0 {
            break;
        }
    }
    if book.centroids.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(Error::Corrupt("non-finite codebook centroid".into()));
    }
    Ok((book, trace))
}
