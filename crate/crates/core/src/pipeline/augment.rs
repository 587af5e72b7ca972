//! Label-preserving affine augmentation: rotation, shift and zoom composed
//! into a single inverse-mapped warp with bilinear sampling and white fill.

use serde::{Deserialize, Serialize};

use super::image::ImageTensor;
use super::manifest::AffineParams;
use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    pub rotate_deg_max: f64,
    pub shift_frac_max: f64,
    pub zoom_min: f64,
    pub zoom_max: f64,
    pub factor: usize,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            rotate_deg_max: 8.0,
            shift_frac_max: 0.05,
            zoom_min: 0.90,
            zoom_max: 1.10,
            factor: 5,
        }
    }
}

impl AugmentParams {
    /// A parameter set whose every sample is the identity warp.
    pub fn neutral(factor: usize) -> Self {
        Self {
            rotate_deg_max: 0.0,
            shift_frac_max: 0.0,
            zoom_min: 1.0,
            zoom_max: 1.0,
            factor,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.rotate_deg_max >= 0.0) {
            v.push(format!("rotate_deg_max = {} must be >= 0", self.rotate_deg_max));
        }
        if !(0.0..1.0).contains(&self.shift_frac_max) {
            v.push(format!("shift_frac_max = {} must be in [0, 1)", self.shift_frac_max));
        }
        if !(self.zoom_min > 0.0 && self.zoom_min <= self.zoom_max) {
            v.push(format!(
                "zoom range [{}, {}] must satisfy 0 < min <= max",
                self.zoom_min, self.zoom_max
            ));
        }
        if self.factor < 1 {
            v.push("factor must be >= 1".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            Some(msg) => Err(Error::arg(msg.clone())),
            None => Ok(()),
        }
    }

    /// Draws rotation, horizontal shift, vertical shift and zoom, in that order.
    pub fn sample(&self, rng: &mut StreamRng) -> AffineParams {
        AffineParams {
            rotate_deg: rng.uniform(-self.rotate_deg_max, self.rotate_deg_max),
            shift_x: rng.uniform(-self.shift_frac_max, self.shift_frac_max),
            shift_y: rng.uniform(-self.shift_frac_max, self.shift_frac_max),
            zoom: rng.uniform(self.zoom_min, self.zoom_max),
        }
    }
}

/// Applies `t` about the image center: zoom, then rotate, then shift.
/// Output pixels whose preimage falls outside the source read as white.
pub fn warp_affine(img: &ImageTensor, t: &AffineParams) -> ImageTensor {
    let (h, w) = (img.height(), img.width());
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (sin, cos) = t.rotate_deg.to_radians().sin_cos();
    let (tx, ty) = (t.shift_x * w as f64, t.shift_y * h as f64);
    let inv_zoom = 1.0 / t.zoom;
    ImageTensor::from_fn(img.channels(), h, w, |c, y, x| {
        let dx = x as f64 - cx - tx;
        let dy = y as f64 - cy - ty;
        // inverse rotation
        let sx = (cos * dx + sin * dy) * inv_zoom + cx;
        let sy = (-sin * dx + cos * dy) * inv_zoom + cy;
        sample_white(img, c, sy, sx) as f32
    })
}

fn sample_white(img: &ImageTensor, c: usize, y: f64, x: f64) -> f64 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let px = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= img.height() as f64 || xx >= img.width() as f64 {
            1.0
        } else {
            img.get(c, yy as usize, xx as usize) as f64
        }
    };
    if fy == 0.0 && fx == 0.0 {
        return px(y0, x0);
    }
    let top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1.0) * fx;
    let bot = px(y0 + 1.0, x0) * (1.0 - fx) + px(y0 + 1.0, x0 + 1.0) * fx;
    (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0)
}

/// Samples one random warp and applies it.
pub fn augment_one(img: &ImageTensor, p: &AugmentParams, rng: &mut StreamRng) -> (ImageTensor, AffineParams) {
    let t = p.sample(rng);
    (warp_affine(img, &t), t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(size: usize, radius: f64) -> ImageTensor {
        let c = (size as f64 - 1.0) / 2.0;
        ImageTensor::from_fn(3, size, size, |_, y, x| {
            let r = ((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt();
            if r <= radius {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Half-width of the bright run through the center row, in pixels.
    fn disk_extent(img: &ImageTensor) -> f64 {
        let row = img.height() / 2;
        let mid = img.width() / 2;
        let mut x = mid;
        while x < img.width() && img.get(0, row, x) >= 0.5 {
            x += 1;
        }
        x as f64 - (img.width() as f64 - 1.0) / 2.0
    }

    #[test]
    fn neutral_params_are_identity() {
        let img = ImageTensor::from_fn(3, 7, 9, |c, y, x| ((c + 2 * y + 3 * x) % 11) as f32 / 10.0);
        let mut rng = StreamRng::new(4);
        let (out, t) = augment_one(&img, &AugmentParams::neutral(5), &mut rng);
        assert_eq!(t.zoom, 1.0);
        assert_eq!(out, img);
    }

    #[test]
    fn same_rng_state_same_descriptor() {
        let img = ImageTensor::filled(3, 8, 8, 0.2);
        let p = AugmentParams::default();
        let rng = StreamRng::new(77);
        let (a_img, a) = augment_one(&img, &p, &mut rng.clone());
        let (b_img, b) = augment_one(&img, &p, &mut rng.clone());
        assert_eq!(a, b);
        assert_eq!(a_img, b_img);
    }

    #[test]
    fn samples_stay_in_range() {
        let p = AugmentParams::default();
        let mut rng = StreamRng::new(9);
        for _ in 0..1000 {
            let t = p.sample(&mut rng);
            assert!(t.rotate_deg.abs() <= 8.0);
            assert!(t.shift_x.abs() <= 0.05 && t.shift_y.abs() <= 0.05);
            assert!((0.9..=1.1).contains(&t.zoom));
        }
    }

    #[test]
    fn zoom_out_shrinks_disk() {
        let img = disk(64, 20.0);
        let before = disk_extent(&img);
        let t = AffineParams {
            zoom: 0.9,
            ..AffineParams::IDENTITY
        };
        let after = disk_extent(&warp_affine(&img, &t));
        assert!((after - 0.9 * before).abs() <= 1.0, "{before} -> {after}");
    }

    #[test]
    fn shift_moves_content_and_fills_white() {
        let img = ImageTensor::from_fn(3, 10, 10, |_, _, x| if x == 4 { 0.0 } else { 0.5 });
        let t = AffineParams {
            shift_x: 0.2,
            ..AffineParams::IDENTITY
        };
        let out = warp_affine(&img, &t);
        assert_eq!(out.get(0, 3, 6), 0.0);
        assert_eq!(out.get(0, 3, 0), 1.0);
        assert_eq!(out.get(0, 3, 1), 1.0);
    }

    #[test]
    fn invalid_params_reported() {
        let p = AugmentParams {
            zoom_min: 1.2,
            zoom_max: 1.0,
            shift_frac_max: 1.0,
            ..Default::default()
        };
        assert_eq!(p.violations().len(), 2);
        assert!(p.validate().is_err());
    }
}
