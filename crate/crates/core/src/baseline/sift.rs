//! Difference-of-Gaussians keypoints and 128-d gradient-histogram descriptors.

use alloc::vec;
use alloc::vec::Vec;
use core::f32::consts::PI;

use num_traits::Float;

use crate::math;
use crate::error::{Error, Result};
use crate::image::{gaussian_blur, Plane};

pub const DESCRIPTOR_LEN: usize = 128;
const DESC_CELLS: usize = 4;
const DESC_BINS: usize = 8;
const ORI_BINS: usize = 36;
const BORDER: usize = 5;
pub const MIN_IMAGE_SIDE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiftConfig {
    pub sigma0: f64,
    pub scales_per_octave: usize,
    pub contrast_threshold: f32,
    pub edge_ratio: f32,
    /// Blur already present in the input image.
    pub assumed_blur: f64,
    /// No octave is built once its shorter side drops below this.
    pub min_octave_side: usize,
}

impl Default for SiftConfig {
    fn default() -> Self {
        Self {
            sigma0: 1.6,
            scales_per_octave: 3,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            assumed_blur: 0.5,
            min_octave_side: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Sub-pixel position in input-image coordinates.
    pub x: f32,
    pub y: f32,
    /// Gaussian scale in input-image pixels.
    pub scale: f32,
    /// Dominant gradient orientation in radians, `[0, 2π)`.
    pub orientation: f32,
    /// |DoG| at the interpolated extremum.
    pub response: f32,
    pub octave: usize,
    pub layer: usize,
    /// Scale relative to the keypoint's octave.
    pub octave_scale: f32,
}

/// A 128-d descriptor: 4×4 spatial cells × 8 orientation bins, unit norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptor(pub [f32; DESCRIPTOR_LEN]);

impl Descriptor {
    pub fn norm(&self) -> f32 {
        self.0.iter().map(|v| v * v).sum::<f32>().sqrt()
    }

    pub fn cosine(&self, other: &Descriptor) -> f32 {
        let dot: f32 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        dot / (self.norm() * other.norm()).max(f32::MIN_POSITIVE)
    }
}

/// Gaussian smoothing (σ = 1) followed by a linear stretch to `[0, 1]`.
/// A constant image maps to 0.5.
pub fn preprocess(image: &Plane<f32>) -> Plane<f32> {
    let smooth = gaussian_blur(image, 1.0);
    let (lo, hi) = smooth
        .data
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi - lo > 1e-6) {
        return Plane::filled(smooth.width, smooth.height, 0.5);
    }
    let span = hi - lo;
    smooth.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
}

struct Octave {
    gaussians: Vec<Plane<f32>>,
    dogs: Vec<Plane<f32>>,
}

/// Gaussian / DoG pyramid of one image.
pub struct ScaleSpace {
    config: SiftConfig,
    octaves: Vec<Octave>,
}

impl ScaleSpace {
    pub fn build(image: &Plane<f32>, config: SiftConfig) -> Result<Self> {
        if image.width < MIN_IMAGE_SIDE || image.height < MIN_IMAGE_SIDE {
            return Err(Error::TooSmall {
                op: "sift",
                min: vec![MIN_IMAGE_SIDE, MIN_IMAGE_SIDE],
                found: vec![image.height, image.width],
            });
        }
        let s = config.scales_per_octave;
        let k = math::powf(2f64, 1.0 / s as f64);
        let sigmas: Vec<f64> = (0..s + 3).map(|i| config.sigma0 * math::powi(k, i as i32)).collect();
        let increments: Vec<f64> = (1..s + 3)
            .map(|i| (sigmas[i] * sigmas[i] - sigmas[i - 1] * sigmas[i - 1]).sqrt())
            .collect();
        let initial = (config.sigma0 * config.sigma0 - config.assumed_blur * config.assumed_blur)
            .max(0.01)
            .sqrt();
        let mut base = gaussian_blur(image, initial);
        let mut octaves = Vec::new();
        while base.width.min(base.height) >= config.min_octave_side {
            let mut gaussians = Vec::with_capacity(s + 3);
            gaussians.push(base);
            for inc in &increments {
                let next = gaussian_blur(gaussians.last().expect("non-empty"), *inc);
                gaussians.push(next);
            }
            let dogs = gaussians
                .windows(2)
                .map(|w| Plane {
                    width: w[0].width,
                    height: w[0].height,
                    data: w[1].data.iter().zip(&w[0].data).map(|(a, b)| a - b).collect(),
                })
                .collect();
            // next octave starts from the image at twice the base sigma
            base = decimate(&gaussians[s]);
            octaves.push(Octave { gaussians, dogs });
        }
        Ok(Self { config, octaves })
    }

    pub fn octave_count(&self) -> usize {
        self.octaves.len()
    }

    /// Scale-space extrema surviving the contrast and edge tests, each with its
    /// dominant orientation.
    pub fn detect(&self, contrast_threshold: f32, edge_ratio: f32) -> Vec<Keypoint> {
        let s = self.config.scales_per_octave;
        let prefilter = 0.5 * contrast_threshold / s as f32;
        let edge_limit = (edge_ratio + 1.0) * (edge_ratio + 1.0) / edge_ratio;
        let mut out = Vec::new();
        for (o, oct) in self.octaves.iter().enumerate() {
            let (w, h) = (oct.dogs[0].width, oct.dogs[0].height);
            if w <= 2 * BORDER || h <= 2 * BORDER {
                continue;
            }
            for layer in 1..=s {
                let cur = &oct.dogs[layer];
                for y in BORDER..h - BORDER {
                    for x in BORDER..w - BORDER {
                        let v = cur.at(x, y);
                        if v.abs() <= prefilter || !is_extremum(&oct.dogs, layer, x, y) {
                            continue;
                        }
                        if let Some(kp) = self.refine(o, layer, x, y, contrast_threshold, edge_limit) {
                            out.push(kp);
                        }
                    }
                }
            }
        }
        out
    }

    fn refine(
        &self,
        o: usize,
        layer: usize,
        x: usize,
        y: usize,
        contrast_threshold: f32,
        edge_limit: f32,
    ) -> Option<Keypoint> {
        let s = self.config.scales_per_octave;
        let dogs = &self.octaves[o].dogs;
        let (w, h) = (dogs[0].width, dogs[0].height);
        let (mut x, mut y, mut l) = (x, y, layer);
        let mut offset = [0.0f32; 3];
        let mut converged = false;
        for _ in 0..5 {
            let (g, hess) = derivatives(dogs, l, x, y);
            offset = solve3(&hess, &g)?;
            if offset.iter().all(|v| v.abs() < 0.5) {
                converged = true;
                break;
            }
            let nx = x as f32 + offset[0].round();
            let ny = y as f32 + offset[1].round();
            let nl = l as f32 + offset[2].round();
            if nl < 1.0 || nl > s as f32 || nx < BORDER as f32 || ny < BORDER as f32 {
                return None;
            }
            if nx >= (w - BORDER) as f32 || ny >= (h - BORDER) as f32 {
                return None;
            }
            x = nx as usize;
            y = ny as usize;
            l = nl as usize;
        }
        if !converged {
            return None;
        }
        let (g, _) = derivatives(dogs, l, x, y);
        let value = dogs[l].at(x, y) + 0.5 * (g[0] * offset[0] + g[1] * offset[1] + g[2] * offset[2]);
        if value.abs() < contrast_threshold {
            return None;
        }
        // principal curvature ratio on the spatial Hessian
        let d = &dogs[l];
        let c = d.at(x, y);
        let dxx = d.at(x + 1, y) + d.at(x - 1, y) - 2.0 * c;
        let dyy = d.at(x, y + 1) + d.at(x, y - 1) - 2.0 * c;
        let dxy = (d.at(x + 1, y + 1) - d.at(x - 1, y + 1) - d.at(x + 1, y - 1) + d.at(x - 1, y - 1)) / 4.0;
        let tr = dxx + dyy;
        let det = dxx * dyy - dxy * dxy;
        if det <= 0.0 || tr * tr / det >= edge_limit {
            return None;
        }
        let octave_scale = self.config.sigma0 as f32 * math::powf(2f32, (l as f32 + offset[2]) / s as f32);
        let factor = (1usize << o) as f32;
        let mut kp = Keypoint {
            x: (x as f32 + offset[0]) * factor,
            y: (y as f32 + offset[1]) * factor,
            scale: octave_scale * factor,
            orientation: 0.0,
            response: value.abs(),
            octave: o,
            layer: l,
            octave_scale,
        };
        kp.orientation = self.dominant_orientation(&kp);
        Some(kp)
    }

    fn dominant_orientation(&self, kp: &Keypoint) -> f32 {
        let img = &self.octaves[kp.octave].gaussians[kp.layer];
        let factor = (1usize << kp.octave) as f32;
        let (cx, cy) = ((kp.x / factor).round() as isize, (kp.y / factor).round() as isize);
        let sigma = 1.5 * kp.octave_scale;
        let radius = (3.0 * sigma).round() as isize;
        let mut hist = [0.0f32; ORI_BINS];
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let (px, py) = (cx + dx, cy + dy);
                if px < 1 || py < 1 || px >= img.width as isize - 1 || py >= img.height as isize - 1 {
                    continue;
                }
                let (mag, ori) = gradient(img, px as usize, py as usize);
                let weight = math::exp(-((dx * dx + dy * dy) as f32) / (2.0 * sigma * sigma));
                let bin = ((ori / (2.0 * PI) * ORI_BINS as f32).floor() as isize).rem_euclid(ORI_BINS as isize);
                hist[bin as usize] += weight * mag;
            }
        }
        // circular [1 4 6 4 1]/16 smoothing
        let smoothed: Vec<f32> = (0..ORI_BINS)
            .map(|i| {
                let at = |d: isize| hist[(i as isize + d).rem_euclid(ORI_BINS as isize) as usize];
                (at(-2) + at(2) + 4.0 * (at(-1) + at(1)) + 6.0 * at(0)) / 16.0
            })
            .collect();
        let mut best = 0;
        for i in 1..ORI_BINS {
            if smoothed[i] > smoothed[best] {
                best = i;
            }
        }
        let left = smoothed[(best + ORI_BINS - 1) % ORI_BINS];
        let right = smoothed[(best + 1) % ORI_BINS];
        let denom = left - 2.0 * smoothed[best] + right;
        let shift = if denom.abs() > 1e-12 { 0.5 * (left - right) / denom } else { 0.0 };
        let angle = (best as f32 + 0.5 + shift) * 2.0 * PI / ORI_BINS as f32;
        wrap_angle(angle)
    }

    /// Rotation-normalized 4×4×8 descriptor around `kp`.
    pub fn descriptor(&self, kp: &Keypoint) -> Descriptor {
        let img = &self.octaves[kp.octave.min(self.octaves.len() - 1)].gaussians[kp.layer];
        let factor = (1usize << kp.octave) as f32;
        let (cx, cy) = (kp.x / factor, kp.y / factor);
        let cell = 3.0 * kp.octave_scale;
        let d = DESC_CELLS as f32;
        let radius = (cell * core::f32::consts::SQRT_2 * (d + 1.0) * 0.5).round() as isize;
        let (sin, cos) = kp.orientation.sin_cos();
        let mut hist = [0.0f32; DESCRIPTOR_LEN];
        let (icx, icy) = (cx.round() as isize, cy.round() as isize);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let px = (icx + dx).clamp(1, img.width as isize - 2) as usize;
                let py = (icy + dy).clamp(1, img.height as isize - 2) as usize;
                let (ox, oy) = (px as f32 - cx, py as f32 - cy);
                // sample coordinates in the keypoint frame, in cell units
                let rx = (cos * ox + sin * oy) / cell;
                let ry = (-sin * ox + cos * oy) / cell;
                let cbin = rx + d / 2.0 - 0.5;
                let rbin = ry + d / 2.0 - 0.5;
                if cbin <= -1.0 || rbin <= -1.0 || cbin >= d || rbin >= d {
                    continue;
                }
                let (mag, ori) = gradient(img, px, py);
                let rel = wrap_angle(ori - kp.orientation);
                let obin = rel / (2.0 * PI) * DESC_BINS as f32;
                let weight = math::exp(-(rx * rx + ry * ry) / (2.0 * (0.5 * d) * (0.5 * d))) * mag;
                trilinear(&mut hist, rbin, cbin, obin, weight);
            }
        }
        normalize_descriptor(hist)
    }
}

fn decimate(img: &Plane<f32>) -> Plane<f32> {
    let (w, h) = (img.width / 2, img.height / 2);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(img.at(2 * x, 2 * y));
        }
    }
    Plane { width: w, height: h, data }
}

fn is_extremum(dogs: &[Plane<f32>], layer: usize, x: usize, y: usize) -> bool {
    let v = dogs[layer].at(x, y);
    let mut is_max = v > 0.0;
    let mut is_min = v < 0.0;
    for d in &dogs[layer - 1..=layer + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                let n = d.at(xx, yy);
                is_max &= v >= n;
                is_min &= v <= n;
            }
        }
        if !is_max && !is_min {
            return false;
        }
    }
    is_max || is_min
}

/// Gradient and Hessian of the DoG in (x, y, scale).
fn derivatives(dogs: &[Plane<f32>], l: usize, x: usize, y: usize) -> ([f32; 3], [[f32; 3]; 3]) {
    let (prev, cur, next) = (&dogs[l - 1], &dogs[l], &dogs[l + 1]);
    let c = cur.at(x, y);
    let g = [
        (cur.at(x + 1, y) - cur.at(x - 1, y)) / 2.0,
        (cur.at(x, y + 1) - cur.at(x, y - 1)) / 2.0,
        (next.at(x, y) - prev.at(x, y)) / 2.0,
    ];
    let dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - 2.0 * c;
    let dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - 2.0 * c;
    let dss = next.at(x, y) + prev.at(x, y) - 2.0 * c;
    let dxy = (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) - cur.at(x + 1, y - 1) + cur.at(x - 1, y - 1)) / 4.0;
    let dxs = (next.at(x + 1, y) - next.at(x - 1, y) - prev.at(x + 1, y) + prev.at(x - 1, y)) / 4.0;
    let dys = (next.at(x, y + 1) - next.at(x, y - 1) - prev.at(x, y + 1) + prev.at(x, y - 1)) / 4.0;
    (g, [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
}

/// Solves `H · offset = -g` by Cramer's rule.
fn solve3(h: &[[f32; 3]; 3], g: &[f32; 3]) -> Option<[f32; 3]> {
    let det3 = |m: &[[f32; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(h);
    if det.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut m = *h;
        for row in 0..3 {
            m[row][col] = -g[row];
        }
        *o = det3(&m) / det;
    }
    Some(out)
}

/// Central-difference gradient magnitude and orientation in `[0, 2π)`.
fn gradient(img: &Plane<f32>, x: usize, y: usize) -> (f32, f32) {
    let dx = img.at(x + 1, y) - img.at(x - 1, y);
    let dy = img.at(x, y + 1) - img.at(x, y - 1);
    ((dx * dx + dy * dy).sqrt(), wrap_angle(math::atan2(dy, dx)))
}

fn trilinear(hist: &mut [f32; DESCRIPTOR_LEN], rbin: f32, cbin: f32, obin: f32, value: f32) {
    let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
    let (dr, dc, dor) = (rbin - r0, cbin - c0, obin - o0);
    for (ri, wr) in [(r0 as isize, 1.0 - dr), (r0 as isize + 1, dr)] {
        if ri < 0 || ri >= DESC_CELLS as isize {
            continue;
        }
        for (ci, wc) in [(c0 as isize, 1.0 - dc), (c0 as isize + 1, dc)] {
            if ci < 0 || ci >= DESC_CELLS as isize {
                continue;
            }
            for (oi, wo) in [(o0 as isize, 1.0 - dor), (o0 as isize + 1, dor)] {
                let oi = oi.rem_euclid(DESC_BINS as isize) as usize;
                let idx = (ri as usize * DESC_CELLS + ci as usize) * DESC_BINS + oi;
                hist[idx] += value * wr * wc * wo;
            }
        }
    }
}

/// Normalize, clip at 0.2, renormalize. A flat patch gets the uniform unit vector.
fn normalize_descriptor(mut v: [f32; DESCRIPTOR_LEN]) -> Descriptor {
    let norm = |v: &[f32]| v.iter().map(|x| x * x).sum::<f32>().sqrt();
    let n = norm(&v);
    if n <= 1e-12 {
        return Descriptor([1.0 / (DESCRIPTOR_LEN as f32).sqrt(); DESCRIPTOR_LEN]);
    }
    for x in v.iter_mut() {
        *x = (*x / n).min(0.2);
    }
    let n = norm(&v);
    for x in v.iter_mut() {
        *x /= n;
    }
    Descriptor(v)
}

/// Maps an angle into `[0, 2π)`.
fn wrap_angle(a: f32) -> f32 {
    let r = a % (2.0 * PI);
    let r = if r < 0.0 { r + 2.0 * PI } else { r };
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

pub fn detect_keypoints(image: &Plane<f32>, contrast_threshold: f32, edge_ratio: f32) -> Result<Vec<Keypoint>> {
    Ok(ScaleSpace::build(image, SiftConfig::default())?.detect(contrast_threshold, edge_ratio))
}

/// Descriptor of a keypoint previously detected on `image`.
pub fn compute_descriptor(image: &Plane<f32>, kp: &Keypoint) -> Result<Descriptor> {
    let space = ScaleSpace::build(image, SiftConfig::default())?;
    if kp.octave >= space.octave_count() || kp.layer >= SiftConfig::default().scales_per_octave + 3 {
        return Err(Error::InvalidArgument("keypoint does not belong to this image's scale space".into()));
    }
    Ok(space.descriptor(kp))
}

/// Keypoints and descriptors of an already preprocessed image.
pub fn extract(image: &Plane<f32>, config: &SiftConfig) -> Result<Vec<(Keypoint, Descriptor)>> {
    let space = ScaleSpace::build(image, *config)?;
    Ok(space
        .detect(config.contrast_threshold, config.edge_ratio)
        .into_iter()
        .map(|kp| {
            let d = space.descriptor(&kp);
            (kp, d)
        })
        .collect())
}
