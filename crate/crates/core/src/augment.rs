//! Real-time training augmentation: translation, flips, rotation and zoom.

use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{median, Plane};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Maximum shift as a fraction of each axis.
    pub max_translate: f64,
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    pub max_rotation_deg: f64,
    pub zoom_lo: f64,
    pub zoom_hi: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            max_translate: 0.1,
            hflip_prob: 0.5,
            vflip_prob: 0.5,
            max_rotation_deg: 15.0,
            zoom_lo: 0.9,
            zoom_hi: 1.1,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// Everything enabled but every transform at its identity setting.
    pub fn identity() -> Self {
        Self {
            enabled: true,
            max_translate: 0.0,
            hflip_prob: 0.0,
            vflip_prob: 0.0,
            max_rotation_deg: 0.0,
            zoom_lo: 1.0,
            zoom_hi: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let ok = (0.0..=0.5).contains(&self.max_translate)
            && prob(self.hflip_prob)
            && prob(self.vflip_prob)
            && self.max_rotation_deg >= 0.0
            && self.zoom_lo > 0.0
            && self.zoom_lo <= 1.0
            && self.zoom_hi >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(alloc::format!("invalid augmentation config {self:?}")))
        }
    }
}

/// One sampled set of transform parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub shift_x: i64,
    pub shift_y: i64,
    pub hflip: bool,
    pub vflip: bool,
    pub rotation_rad: f64,
    pub zoom: f64,
}

impl Transform {
    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentConfig, width: usize, height: usize, rng: &mut R) -> Self {
        let shift = |rng: &mut R, extent: usize| {
            let max = cfg.max_translate * extent as f64;
            if max > 0.0 {
                rng.random_range(-max..=max).round() as i64
            } else {
                0
            }
        };
        let shift_x = shift(rng, width);
        let shift_y = shift(rng, height);
        let hflip = rng.random::<f64>() < cfg.hflip_prob;
        let vflip = rng.random::<f64>() < cfg.vflip_prob;
        let rotation_rad = if cfg.max_rotation_deg > 0.0 {
            rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg).to_radians()
        } else {
            0.0
        };
        let zoom = if cfg.zoom_hi > cfg.zoom_lo {
            rng.random_range(cfg.zoom_lo..=cfg.zoom_hi)
        } else {
            cfg.zoom_lo
        };
        Self {
            shift_x,
            shift_y,
            hflip,
            vflip,
            rotation_rad,
            zoom,
        }
    }

    /// Applies translation, flips, rotation and zoom (in that order) with
    /// nearest-neighbour sampling; uncovered pixels take the median intensity.
    pub fn apply<T: Real>(&self, img: &Plane<T>) -> Plane<T> {
        let (w, h) = (img.width, img.height);
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let (sin, cos) = self.rotation_rad.sin_cos();
        let mut fill: Option<T> = None;
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                // invert zoom, then rotation, then flips, then translation
                let zx = (x as f64 - cx) / self.zoom;
                let zy = (y as f64 - cy) / self.zoom;
                let mut qx = cos * zx + sin * zy + cx;
                let mut qy = -sin * zx + cos * zy + cy;
                if self.hflip {
                    qx = 2.0 * cx - qx;
                }
                if self.vflip {
                    qy = 2.0 * cy - qy;
                }
                let sx = (qx - self.shift_x as f64).round();
                let sy = (qy - self.shift_y as f64).round();
                if sx >= 0.0 && sy >= 0.0 && sx < w as f64 && sy < h as f64 {
                    data.push(img.at(sx as usize, sy as usize));
                } else {
                    data.push(*fill.get_or_insert_with(|| median(&img.data)));
                }
            }
        }
        Plane {
            width: w,
            height: h,
            data,
        }
    }
}

/// Random augmentation of a `[h, w, 1]` image; the output has the same shape.
pub fn augment<T: Real, R: Rng + ?Sized>(image: &Tensor<T>, cfg: &AugmentConfig, rng: &mut R) -> Result<Tensor<T>> {
    if !cfg.enabled {
        return Ok(image.clone());
    }
    let plane = Plane::from_tensor(image)?;
    let t = Transform::sample(cfg, plane.width, plane.height, rng);
    Ok(t.apply(&plane).into_tensor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn random_image(w: usize, h: usize, seed: u64) -> Tensor<f32> {
        let mut r = stream(seed, &[]);
        Tensor::new([h, w, 1], (0..w * h).map(|_| r.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn identity_configs_leave_image_unchanged() {
        let img = random_image(33, 20, 1);
        let mut r = stream(2, &[]);
        assert_eq!(augment(&img, &AugmentConfig::disabled(), &mut r).unwrap(), img);
        assert_eq!(augment(&img, &AugmentConfig::identity(), &mut r).unwrap(), img);
    }

    #[test]
    fn horizontal_flip_is_an_involution() {
        let img = Plane::from_tensor(&random_image(33, 20, 3)).unwrap();
        let flip = Transform {
            shift_x: 0,
            shift_y: 0,
            hflip: true,
            vflip: false,
            rotation_rad: 0.0,
            zoom: 1.0,
        };
        let once = flip.apply(&img);
        assert_ne!(once, img);
        assert_eq!(once.at(0, 5), img.at(32, 5));
        assert_eq!(flip.apply(&once), img);
    }

    #[test]
    fn shapes_and_range_preserved_for_random_configs() {
        let img = random_image(40, 30, 4);
        let mut r = stream(5, &[]);
        for i in 0..200 {
            let cfg = AugmentConfig {
                enabled: true,
                max_translate: r.random_range(0.0..=0.5),
                hflip_prob: r.random(),
                vflip_prob: r.random(),
                max_rotation_deg: r.random_range(0.0..180.0),
                zoom_lo: r.random_range(0.5..=1.0),
                zoom_hi: r.random_range(1.0..2.0),
            };
            cfg.validate().unwrap();
            let out = augment(&img, &cfg, &mut stream(6, &[i])).unwrap();
            assert_eq!(out.shape(), img.shape());
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn translation_fills_with_median() {
        let img = Plane::new(4, 1, alloc::vec![0.1f32, 0.2, 0.9, 0.4]).unwrap();
        let t = Transform {
            shift_x: 1,
            shift_y: 0,
            hflip: false,
            vflip: false,
            rotation_rad: 0.0,
            zoom: 1.0,
        };
        assert_eq!(t.apply(&img).data, alloc::vec![0.2, 0.1, 0.2, 0.9]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = AugmentConfig::default();
        c.max_translate = 0.6;
        assert!(c.validate().is_err());
        let mut c = AugmentConfig::default();
        c.zoom_lo = 1.2;
        assert!(c.validate().is_err());
        let mut c = AugmentConfig::default();
        c.hflip_prob = 1.5;
        assert!(c.validate().is_err());
    }
}
