//! Procedural three-class scattering-image generator.
//!
//! * Crypto: a dark elliptical core ringed by a bright grey band, followed by
//!   a few widely spaced outer fringes.
//! * Giardia: an oval stack of many closely spaced concentric fringes.
//! * Others: smoothed speckle background with a few faint random blobs.
//!
//! Every object is randomized in size, eccentricity, orientation, position
//! and contrast, and every image gets additive Gaussian noise. Each sample
//! draws from its own stream keyed by `(seed, split, class, index)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::image::{downscale_2x, gaussian_blur, Plane};
use crate::model::{INPUT_HEIGHT, INPUT_WIDTH};
use crate::rng::{self, StreamRng};
use crate::tensor::Tensor;
use crate::Class;

pub const GENERATOR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    /// `[h, w, 1]`, values in `[0, 1]`.
    pub pixels: Tensor<f32>,
    pub label: Class,
    pub source: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledImage>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in &self.samples {
            c[s.label.index()] += 1;
        }
        c
    }
}

/// Inclusive `[lo, hi]` range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    fn valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub width: usize,
    pub height: usize,
    /// Render at twice the size and area-downscale, as done for raw captures.
    pub render_full_resolution: bool,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Object semi-major radius in output pixels.
    pub radius: Range,
    /// Axis ratio (major/minor) of the crypto band.
    pub crypto_eccentricity: Range,
    /// Axis ratio of the giardia oval.
    pub giardia_eccentricity: Range,
    pub crypto_fringes: Range,
    pub giardia_fringes: Range,
    /// Radial distance between consecutive fringes, in output pixels.
    pub crypto_fringe_period: Range,
    pub giardia_fringe_period: Range,
    /// Peak angular bend of the giardia fringe phase, in radians.
    pub giardia_fringe_warp: Range,
    /// Depth of the angular fade along giardia fringes (0 = uniform).
    pub giardia_fringe_fade: Range,
    /// Share of "others" images that contain a crypto-like particle.
    pub lookalike_fraction: f64,
    /// Peak intensity deviation of the object from the background.
    pub contrast: Range,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: Range,
    /// Maximum object offset from the image centre as a fraction of each axis.
    pub position_jitter: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            width: INPUT_WIDTH,
            height: INPUT_HEIGHT,
            render_full_resolution: false,
            train_per_class: 300,
            test_per_class: 100,
            radius: Range::new(22.0, 40.0),
            crypto_eccentricity: Range::new(1.0, 1.5),
            giardia_eccentricity: Range::new(1.3, 1.9),
            crypto_fringes: Range::new(1.0, 3.0),
            giardia_fringes: Range::new(4.0, 8.0),
            crypto_fringe_period: Range::new(11.0, 16.0),
            giardia_fringe_period: Range::new(4.5, 7.5),
            giardia_fringe_warp: Range::new(0.0, 1.5),
            giardia_fringe_fade: Range::new(0.3, 0.8),
            lookalike_fraction: 0.35,
            contrast: Range::new(0.08, 0.35),
            noise: Range::new(0.02, 0.07),
            position_jitter: 0.2,
            seed: 7,
        }
    }
}

impl GenConfig {
    /// 5000 training and 1000 test images per class.
    pub fn full_scale() -> Self {
        Self {
            train_per_class: 5000,
            test_per_class: 1000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("radius", self.radius),
            ("crypto_eccentricity", self.crypto_eccentricity),
            ("giardia_eccentricity", self.giardia_eccentricity),
            ("crypto_fringes", self.crypto_fringes),
            ("giardia_fringes", self.giardia_fringes),
            ("crypto_fringe_period", self.crypto_fringe_period),
            ("giardia_fringe_period", self.giardia_fringe_period),
            ("giardia_fringe_warp", self.giardia_fringe_warp),
            ("giardia_fringe_fade", self.giardia_fringe_fade),
            ("contrast", self.contrast),
            ("noise", self.noise),
        ];
        for (name, r) in ranges {
            if !r.valid() || r.lo < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} range {r:?} is not ordered")));
            }
        }
        if self.radius.lo <= 0.0 || self.crypto_fringe_period.lo <= 0.0 || self.giardia_fringe_period.lo <= 0.0 {
            return Err(Error::InvalidArgument("radius and fringe periods must be positive".into()));
        }
        if self.crypto_eccentricity.lo < 1.0 || self.giardia_eccentricity.lo < 1.0 {
            return Err(Error::InvalidArgument("axis ratios must be at least 1".into()));
        }
        if self.giardia_fringe_period.hi >= self.crypto_fringe_period.lo {
            return Err(Error::InvalidArgument(
                "giardia fringe periods must lie strictly below crypto's".into(),
            ));
        }
        if self.width < 32 || self.height < 32 {
            return Err(Error::InvalidArgument(format!("image {}x{} too small", self.width, self.height)));
        }
        if self.giardia_fringe_fade.hi > 1.0 {
            return Err(Error::InvalidArgument("fringe fade depth must be at most 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lookalike_fraction) {
            return Err(Error::InvalidArgument("lookalike fraction must be in [0, 1]".into()));
        }
        if !(0.0..0.5).contains(&self.position_jitter) {
            return Err(Error::InvalidArgument("position jitter must be in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Where the object was placed, for measurement probes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGeometry {
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    pub orientation: f64,
    pub axis_ratio: f64,
}

/// Smooth 0→1 transition of width `2·soft` centred on `edge`.
fn step(x: f64, edge: f64, soft: f64) -> f64 {
    let t = ((x - edge) / (2.0 * soft) + 0.5).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

struct Canvas {
    plane: Plane<f64>,
    scale: f64,
}

impl Canvas {
    /// Adds `profile(d)` where `d` is the elliptical radius in output pixels.
    /// Adds `profile(d, theta)`, where `d` is the elliptical radius and
    /// `theta` the polar angle in the object's own frame.
    fn add_radial(&mut self, g: &SampleGeometry, reach: f64, profile: impl Fn(f64, f64) -> f64) {
        let s = self.scale;
        let (cx, cy) = (g.center_x * s, g.center_y * s);
        let (sin, cos) = g.orientation.sin_cos();
        let r = reach * s;
        let (w, h) = (self.plane.width, self.plane.height);
        let x0 = (cx - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil().max(0.0) as usize).min(w);
        let y0 = (cy - r).floor().max(0.0) as usize;
        let y1 = ((cy + r).ceil().max(0.0) as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = (x as f64 - cx) / s;
                let dy = (y as f64 - cy) / s;
                let u = cos * dx + sin * dy;
                let v = (-sin * dx + cos * dy) * g.axis_ratio;
                let d = (u * u + v * v).sqrt();
                self.plane.data[y * w + x] += profile(d, math::atan2(v, u));
            }
        }
    }
}

fn place<R: Rng + ?Sized>(cfg: &GenConfig, axis_ratio: f64, rng: &mut R) -> SampleGeometry {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let jx = cfg.position_jitter * w;
    let jy = cfg.position_jitter * h;
    SampleGeometry {
        center_x: (w - 1.0) / 2.0 + rng.random_range(-jx..=jx),
        center_y: (h - 1.0) / 2.0 + rng.random_range(-jy..=jy),
        radius: cfg.radius.sample(rng),
        orientation: rng.random_range(0.0..PI),
        axis_ratio,
    }
}

/// Generates one image and reports where its object was placed.
pub fn gen_sample_with_geometry<R: Rng + ?Sized>(
    class: Class,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<(Tensor<f32>, SampleGeometry)> {
    cfg.validate()?;
    let scale = if cfg.render_full_resolution { 2.0 } else { 1.0 };
    let (w, h) = ((cfg.width as f64 * scale) as usize, (cfg.height as f64 * scale) as usize);

    // background: base level plus a gentle illumination gradient
    let base = rng.random_range(0.35..0.6);
    let gx = rng.random_range(-0.05..0.05) / w as f64;
    let gy = rng.random_range(-0.05..0.05) / h as f64;
    let mut plane = Plane::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            plane.data[y * w + x] = base + gx * (x as f64 - w as f64 / 2.0) + gy * (y as f64 - h as f64 / 2.0);
        }
    }
    let mut canvas = Canvas { plane, scale };
    let contrast = cfg.contrast.sample(rng);

    let geometry = match class {
        Class::Crypto => {
            let g = place(cfg, cfg.crypto_eccentricity.sample(rng), rng);
            let core = g.radius * rng.random_range(0.45..0.65);
            // the dark region flickers in depth, the band in brightness
            let dark = contrast * rng.random_range(0.6..1.4);
            let band = contrast * rng.random_range(0.5..1.0);
            let fringes = cfg.crypto_fringes.sample(rng).round().max(1.0);
            let period = cfg.crypto_fringe_period.sample(rng);
            let outer = g.radius + fringes * period;
            let ring_amp = 0.5 * contrast;
            let r = g.radius;
            canvas.add_radial(&g, outer + 2.0, |d, _| {
                let inside = 1.0 - step(d, core, 1.5);
                let in_band = step(d, core, 1.5) * (1.0 - step(d, r, 1.5));
                let t = d - r;
                let rings = if t > 0.0 && t < fringes * period {
                    let env = 1.0 - t / (fringes * period);
                    ring_amp * env * math::cos(2.0 * PI * t / period) * step(d, r, 1.5)
                } else {
                    0.0
                };
                -dark * inside + band * in_band + rings
            });
            g
        }
        Class::Giardia => {
            let g = place(cfg, cfg.giardia_eccentricity.sample(rng), rng);
            let fringes = cfg.giardia_fringes.sample(rng).round().max(1.0);
            let period = cfg.giardia_fringe_period.sample(rng);
            let start = g.radius * rng.random_range(0.1..0.35);
            let extent = (g.radius - start).max(fringes * period);
            let phase = rng.random_range(0.0..2.0 * PI);
            let amp = contrast * rng.random_range(0.7..1.1);
            let tint = contrast * rng.random_range(-0.3..0.3);
            // Fringe orientation varies around the cell: the phase bends with
            // angle and the fringes fade in and out along their length.
            let warp = cfg.giardia_fringe_warp.sample(rng);
            let warp_lobes = rng.random_range(2..=3) as f64;
            let warp_phase = rng.random_range(0.0..2.0 * PI);
            let fade = cfg.giardia_fringe_fade.sample(rng);
            let fade_lobes = rng.random_range(2..=4) as f64;
            let fade_phase = rng.random_range(0.0..2.0 * PI);
            canvas.add_radial(&g, start + extent + 2.0, |d, theta| {
                let t = d - start;
                let body = tint * (1.0 - step(d, start + extent, 2.0));
                if t <= 0.0 || t >= extent {
                    return body;
                }
                let fading = 0.5 + 0.5 * math::cos(fade_lobes * theta + fade_phase);
                let env = math::sin(PI * t / extent) * (1.0 - fade * fading);
                let bend = warp * math::sin(warp_lobes * theta + warp_phase);
                body + amp * env * math::cos(2.0 * PI * t / period + phase + bend)
            });
            // Internal structure: a few nuclei as small dark spots.
            let (sin, cos) = g.orientation.sin_cos();
            for _ in 0..rng.random_range(2..=4) {
                let (r, a) = (g.radius * rng.random_range(0.0..0.45), rng.random_range(0.0..2.0 * PI));
                let (u, v) = (r * math::cos(a), r * math::sin(a) / g.axis_ratio);
                let spot = SampleGeometry {
                    center_x: g.center_x + cos * u - sin * v,
                    center_y: g.center_y + sin * u + cos * v,
                    radius: rng.random_range(1.5..3.0),
                    orientation: 0.0,
                    axis_ratio: 1.0,
                };
                let depth = contrast * rng.random_range(0.5..1.0);
                let sigma = spot.radius;
                canvas.add_radial(&spot, 3.0 * sigma, |d, _| -depth * math::exp(-d * d / (2.0 * sigma * sigma)));
            }
            g
        }
        Class::Others => {
            // correlated speckle with a per-image grain size
            let grain = rng.random_range(1.0..3.5) * scale;
            let amp = rng.random_range(1.0..3.0) * cfg.noise.sample(rng) * 3.0;
            let mut speckle = Plane::filled(w, h, 0.0);
            for v in speckle.data.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            let speckle = gaussian_blur(&speckle, grain);
            let norm = amp * grain.sqrt() * 2.0;
            for (p, s) in canvas.plane.data.iter_mut().zip(&speckle.data) {
                *p += norm * s;
            }
            let blobs = rng.random_range(1..=4);
            let mut first = None;
            for _ in 0..blobs {
                let mut g = place(cfg, rng.random_range(1.0..2.0), rng);
                g.radius *= rng.random_range(0.2..1.0);
                let a = contrast * rng.random_range(0.3..0.8) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                let sigma = g.radius * 0.6;
                canvas.add_radial(&g, 3.0 * sigma, |d, _| a * math::exp(-d * d / (2.0 * sigma * sigma)));
                first.get_or_insert(g);
            }
            // Some particles mimic a crypto: dark core inside a single bright
            // rim, but without the band-and-fringe sequence.
            if rng.random::<f64>() < cfg.lookalike_fraction {
                let g = place(cfg, cfg.crypto_eccentricity.sample(rng), rng);
                let core = g.radius * rng.random_range(0.4..0.7);
                let dark = contrast * rng.random_range(0.4..1.0);
                let rim = contrast * rng.random_range(0.3..0.8);
                let (r, width) = (g.radius, rng.random_range(2.0..5.0));
                canvas.add_radial(&g, r + 3.0 * width, |d, _| {
                    let inside = 1.0 - step(d, core, 1.5);
                    let ring = math::exp(-(d - r) * (d - r) / (2.0 * width * width));
                    -dark * inside + rim * ring
                });
                first = Some(g);
            }
            first.expect("at least one blob")
        }
    };

    let noise = cfg.noise.sample(rng) * scale;
    for p in canvas.plane.data.iter_mut() {
        let n: f64 = StandardNormal.sample(rng);
        *p += noise * n;
    }
    let mut plane = canvas.plane;
    if cfg.render_full_resolution {
        plane = downscale_2x(&plane);
    }
    let pixels = plane.data.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect();
    Ok((Tensor::new([cfg.height, cfg.width, 1], pixels)?, geometry))
}

pub fn gen_sample<R: Rng + ?Sized>(class: Class, cfg: &GenConfig, rng: &mut R) -> Result<Tensor<f32>> {
    Ok(gen_sample_with_geometry(class, cfg, rng)?.0)
}

/// Which half of the dataset a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Stream for sample `index` of `class` in `split`.
pub fn sample_rng(seed: u64, split: Split, class: Class, index: usize) -> StreamRng {
    rng::stream(seed, &[0x5A17, split as u64, class.index() as u64, index as u64])
}

/// One split, class-major order, generated through `exec`.
pub fn gen_split<E: Executor>(cfg: &GenConfig, split: Split, exec: &E) -> Result<Dataset> {
    cfg.validate()?;
    let per_class = match split {
        Split::Train => cfg.train_per_class,
        Split::Test => cfg.test_per_class,
    };
    if per_class == 0 {
        return Err(Error::InvalidArgument(format!("{} count per class must be at least 1", split.name())));
    }
    let samples = exec.map(3 * per_class, |i| {
        let class = Class::ALL[i / per_class];
        let index = i % per_class;
        let mut rng = sample_rng(cfg.seed, split, class, index);
        gen_sample(class, cfg, &mut rng).map(|pixels| LabeledImage {
            pixels,
            label: class,
            source: format!("{}/{}/{:05}", split.name(), class.name(), index),
        })
    });
    Ok(Dataset {
        samples: samples.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

/// `(train, test)` from disjoint seed streams.
pub fn gen_dataset<E: Executor>(cfg: &GenConfig, exec: &E) -> Result<(Dataset, Dataset)> {
    Ok((gen_split(cfg, Split::Train, exec)?, gen_split(cfg, Split::Test, exec)?))
}
