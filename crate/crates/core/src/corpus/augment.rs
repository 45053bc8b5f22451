//! Training-time augmentation and the deterministic evaluation view.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::LabeledImage;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    /// Range of the crop area as a fraction of the image area.
    pub crop_scale: (f64, f64),
    pub flip_probability: f64,
    /// Maximum absolute rotation.
    pub rotation_degrees: f64,
    /// Side of the square evaluation crop.
    pub eval_center_crop: usize,
    /// Side of the square training output.
    pub train_resolution: usize,
    /// When false, `eval_view` refuses inputs smaller than the crop.
    pub allow_upscale: bool,
}

impl AugmentationPolicy {
    pub fn standard(resolution: usize) -> Self {
        AugmentationPolicy {
            crop_scale: (0.6, 1.0),
            flip_probability: 0.5,
            rotation_degrees: 10.0,
            eval_center_crop: resolution,
            train_resolution: resolution,
            allow_upscale: true,
        }
    }

    /// No stochastic transform at all.
    pub fn identity(resolution: usize) -> Self {
        AugmentationPolicy {
            crop_scale: (1.0, 1.0),
            flip_probability: 0.0,
            rotation_degrees: 0.0,
            ..Self::standard(resolution)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.crop_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidParams(format!("crop scale {:?} must satisfy 0 < min <= max <= 1", self.crop_scale)));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::InvalidParams("flip probability must be in [0, 1]".into()));
        }
        if !(self.rotation_degrees >= 0.0) {
            return Err(Error::InvalidParams("rotation must be non-negative".into()));
        }
        if self.train_resolution == 0 || self.eval_center_crop == 0 {
            return Err(Error::InvalidParams("resolutions must be positive".into()));
        }
        Ok(())
    }
}

/// Bilinear resampling of a window `[y0, y0+h) x [x0, x0+w)` onto `out_h x out_w`
/// using half-pixel centres; samples are clamped to the window.
#[allow(clippy::too_many_arguments)]
fn resample<T: Scalar>(
    img: &LabeledImage<T>,
    y0: usize,
    x0: usize,
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let mut out = Vec::with_capacity(out_h * out_w * 3);
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let (iy, ty) = (fy.floor() as usize, T::lit(fy - fy.floor()));
        let iy1 = (iy + 1).min(h - 1);
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let (ix, tx) = (fx.floor() as usize, T::lit(fx - fx.floor()));
            let ix1 = (ix + 1).min(w - 1);
            for c in 0..3 {
                let a = img.at(y0 + iy, x0 + ix, c);
                let b = img.at(y0 + iy, x0 + ix1, c);
                let d = img.at(y0 + iy1, x0 + ix, c);
                let e = img.at(y0 + iy1, x0 + ix1, c);
                let top = a + (b - a) * tx;
                let bottom = d + (e - d) * tx;
                out.push(top + (bottom - top) * ty);
            }
        }
    }
    out
}

/// Bilinear resize of the whole image.
pub fn resize<T: Scalar>(img: &LabeledImage<T>, out_h: usize, out_w: usize) -> LabeledImage<T> {
    if (out_h, out_w) == (img.height, img.width) {
        return img.clone();
    }
    img.with_pixels(out_h, out_w, resample(img, 0, 0, img.height, img.width, out_h, out_w))
}

fn hflip<T: Scalar>(img: &LabeledImage<T>) -> LabeledImage<T> {
    let mut px = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height {
        for x in (0..img.width).rev() {
            let i = (y * img.width + x) * 3;
            px.extend_from_slice(&img.pixels[i..i + 3]);
        }
    }
    img.with_pixels(img.height, img.width, px)
}

/// Rotation about the image centre with bilinear sampling and replicated borders.
fn rotate<T: Scalar>(img: &LabeledImage<T>, degrees: f64) -> LabeledImage<T> {
    let (h, w) = (img.height, img.width);
    let (s, c) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut px = Vec::with_capacity(img.pixels.len());
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            let sx = (c * dx + s * dy + cx).clamp(0.0, (w - 1) as f64);
            let sy = (-s * dx + c * dy + cy).clamp(0.0, (h - 1) as f64);
            let (ix, iy) = (sx.floor() as usize, sy.floor() as usize);
            let (tx, ty) = (T::lit(sx - sx.floor()), T::lit(sy - sy.floor()));
            let (ix1, iy1) = ((ix + 1).min(w - 1), (iy + 1).min(h - 1));
            for ch in 0..3 {
                let top = img.at(iy, ix, ch) + (img.at(iy, ix1, ch) - img.at(iy, ix, ch)) * tx;
                let bot = img.at(iy1, ix, ch) + (img.at(iy1, ix1, ch) - img.at(iy1, ix, ch)) * tx;
                px.push(top + (bot - top) * ty);
            }
        }
    }
    img.with_pixels(h, w, px)
}

/// Random resized crop, horizontal flip and rotation, producing a
/// `train_resolution` square image. Label, domain and source id are preserved.
pub fn augment<T: Scalar>(image: &LabeledImage<T>, policy: &AugmentationPolicy, rng: &mut impl Rng) -> LabeledImage<T> {
    let (h, w) = (image.height, image.width);
    let (lo, hi) = policy.crop_scale;
    let mut window = (0, 0, h, w);
    if lo < 1.0 {
        let area = (h * w) as f64;
        let log_ratio = ((3.0f64 / 4.0).ln(), (4.0f64 / 3.0).ln());
        for _ in 0..10 {
            let target = area * rng.random_range(lo..=hi);
            let ratio = rng.random_range(log_ratio.0..=log_ratio.1).exp();
            let cw = (target * ratio).sqrt().round() as usize;
            let ch = (target / ratio).sqrt().round() as usize;
            if cw >= 1 && ch >= 1 && cw <= w && ch <= h {
                let y0 = rng.random_range(0..=h - ch);
                let x0 = rng.random_range(0..=w - cw);
                window = (y0, x0, ch, cw);
                break;
            }
        }
    }
    let r = policy.train_resolution;
    let (y0, x0, ch, cw) = window;
    let mut out = if window == (0, 0, h, w) && (h, w) == (r, r) {
        image.clone()
    } else {
        image.with_pixels(r, r, resample(image, y0, x0, ch, cw, r, r))
    };
    if policy.flip_probability > 0.0 && rng.random_bool(policy.flip_probability) {
        out = hflip(&out);
    }
    if policy.rotation_degrees > 0.0 {
        let angle = rng.random_range(-policy.rotation_degrees..=policy.rotation_degrees);
        out = rotate(&out, angle);
    }
    out
}

/// Deterministic shorter-side resize to the crop size, then a centred square crop.
pub fn eval_view<T: Scalar>(image: &LabeledImage<T>, policy: &AugmentationPolicy) -> Result<LabeledImage<T>> {
    let crop = policy.eval_center_crop;
    let (h, w) = (image.height, image.width);
    let short = h.min(w);
    if short < crop && !policy.allow_upscale {
        return Err(Error::ImageTooSmall { height: h, width: w, crop });
    }
    let (rh, rw) = if h <= w {
        (crop, ((w as f64 * crop as f64 / h as f64).round() as usize).max(crop))
    } else {
        (((h as f64 * crop as f64 / w as f64).round() as usize).max(crop), crop)
    };
    let resized = resize(image, rh, rw);
    let (y0, x0) = ((rh - crop) / 2, (rw - crop) / 2);
    if (y0, x0, rh, rw) == (0, 0, crop, crop) {
        return Ok(resized);
    }
    let mut px = Vec::with_capacity(crop * crop * 3);
    for y in y0..y0 + crop {
        let start = (y * rw + x0) * 3;
        px.extend_from_slice(&resized.pixels[start..start + crop * 3]);
    }
    Ok(resized.with_pixels(crop, crop, px))
}
