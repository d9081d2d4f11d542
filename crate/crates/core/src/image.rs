//! Single-channel image planes and the filters shared by the generator, the
//! augmenter and the SIFT pipeline.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::math;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Row-major grayscale plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Real> Plane<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width * height != data.len() {
            return Err(Error::DataLength {
                shape: vec![height, width],
                len: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// From a `[h, w, 1]` tensor.
    pub fn from_tensor(t: &Tensor<T>) -> Result<Self> {
        let (h, w, c) = t.dims3("plane")?;
        if c != 1 {
            return Err(Error::ShapeMismatch {
                op: "plane",
                expected: vec![h, w, 1],
                found: t.shape().to_vec(),
            });
        }
        Ok(Self {
            width: w,
            height: h,
            data: t.data().to_vec(),
        })
    }

    pub fn into_tensor(self) -> Tensor<T> {
        Tensor::new([self.height, self.width, 1], self.data).expect("plane dims are consistent")
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Pixel with coordinates clamped to the border.
    #[inline]
    pub fn clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Normalized 1-D Gaussian taps with radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| {
            let x = i as f64;
            math::exp(-x * x / (2.0 * sigma * sigma))
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur<T: Real>(img: &Plane<T>, sigma: f64) -> Plane<T> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let taps: Vec<T> = gaussian_kernel(sigma).into_iter().map(T::of).collect();
    let r = (taps.len() / 2) as isize;
    let (w, h) = (img.width, img.height);
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        let row = &img.data[y * w..][..w];
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &t) in taps.iter().enumerate() {
                let sx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                acc += t * row[sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![T::zero(); w * h];
    for (k, &t) in taps.iter().enumerate() {
        for y in 0..h {
            let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            let src = &tmp[sy * w..][..w];
            for (o, &s) in out[y * w..][..w].iter_mut().zip(src) {
                *o += t * s;
            }
        }
    }
    Plane {
        width: w,
        height: h,
        data: out,
    }
}

/// 2×2 area-average downscale (odd trailing row/column dropped).
pub fn downscale_2x<T: Real>(img: &Plane<T>) -> Plane<T> {
    let (w, h) = (img.width / 2, img.height / 2);
    let quarter = T::of(0.25);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s = img.at(2 * x, 2 * y)
                + img.at(2 * x + 1, 2 * y)
                + img.at(2 * x, 2 * y + 1)
                + img.at(2 * x + 1, 2 * y + 1);
            data.push(s * quarter);
        }
    }
    Plane {
        width: w,
        height: h,
        data,
    }
}

/// Median (lower median for even lengths). Zero for empty input.
pub fn median<T: Real>(values: &[T]) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let mut v = values.to_vec();
    let mid = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    *m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separable_blur_equals_brute_force_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for sigma in [0.7, 1.0, 1.6, 2.5] {
            let img = Plane::new(16, 16, (0..256).map(|_| rng.random::<f64>()).collect()).unwrap();
            let fast = gaussian_blur(&img, sigma);
            let k = gaussian_kernel(sigma);
            let r = (k.len() / 2) as isize;
            for y in 0..16isize {
                for x in 0..16isize {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate() {
                        for (i, ki) in k.iter().enumerate() {
                            acc += kj * ki * img.clamped(x + i as isize - r, y + j as isize - r);
                        }
                    }
                    let got = fast.at(x as usize, y as usize);
                    assert!((got - acc).abs() < 1e-10, "σ={sigma} ({x},{y}) {got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn downscale_averages_blocks() {
        let img = Plane::new(4, 2, vec![0.0, 1.0, 2.0, 2.0, 1.0, 0.0, 4.0, 4.0]).unwrap();
        let d = downscale_2x(&img);
        assert_eq!((d.width, d.height), (2, 1));
        assert_eq!(d.data, vec![0.5, 3.0]);
        let big = Plane::<f32>::filled(648, 488, 0.3);
        let d = downscale_2x(&big);
        assert_eq!((d.width, d.height), (324, 244));
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0f32, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0f32, 1.0, 2.0, 3.0]), 2.0);
    }
}
