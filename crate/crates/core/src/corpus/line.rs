//! Deterministic line abstraction with an extended difference of Gaussians.
//!
//! `S = G_sigma(L) - tau * G_{k*sigma}(L)` on luminance `L`; a pixel is white
//! where `S >= epsilon` and `1 + tanh(phi * (S - epsilon))` otherwise.

use serde::{Deserialize, Serialize};

use super::image::{Domain, LabeledImage};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XdogParams {
    pub sigma: f64,
    pub k: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub phi: f64,
}

impl Default for XdogParams {
    fn default() -> Self {
        // epsilon = 0 keeps flat regions (S = (1 - tau) * L >= 0) pure white.
        XdogParams { sigma: 1.0, k: 1.6, tau: 0.99, epsilon: 0.0, phi: 10.0 }
    }
}

impl XdogParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.sigma, self.k, self.tau, self.epsilon, self.phi].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("edge operator parameters must be finite".into()));
        }
        if self.sigma <= 0.0 || self.k <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "blur scales must be positive (sigma={}, k={})",
                self.sigma, self.k
            )));
        }
        Ok(())
    }
}

/// Normalized, truncated (radius `ceil(3 sigma)`) sampled Gaussian.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur<T: Scalar>(plane: &[T], height: usize, width: usize, sigma: f64) -> Vec<T> {
    let kernel: Vec<T> = gaussian_kernel(sigma).into_iter().map(T::lit).collect();
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![T::zero(); plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = T::zero();
            for (i, &w) in kernel.iter().enumerate() {
                acc += w * plane[y * width + clamp(x as isize + i as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![T::zero(); plane.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = T::zero();
            for (i, &w) in kernel.iter().enumerate() {
                acc += w * tmp[clamp(y as isize + i as isize - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Single-channel XDoG response in `[0, 1]`, `H x W`.
pub fn xdog<T: Scalar>(luminance: &[T], height: usize, width: usize, params: &XdogParams) -> Result<Vec<T>> {
    params.validate()?;
    let fine = gaussian_blur(luminance, height, width, params.sigma);
    let coarse = gaussian_blur(luminance, height, width, params.k * params.sigma);
    let (tau, eps, phi) = (T::lit(params.tau), T::lit(params.epsilon), T::lit(params.phi));
    Ok(fine
        .iter()
        .zip(&coarse)
        .map(|(&f, &c)| {
            let s = f - tau * c;
            let e = if s >= eps { T::one() } else { T::one() + (phi * (s - eps)).tanh() };
            e.max(T::zero()).min(T::one())
        })
        .collect())
}

/// Converts a photo into a three-channel line drawing (white background, dark strokes).
pub fn to_line_drawing<T: Scalar>(image: &LabeledImage<T>, params: &XdogParams) -> Result<LabeledImage<T>> {
    if image.domain == Domain::Line {
        return Err(Error::InvalidParams(format!("{} is already a line drawing", image.source_id)));
    }
    let lum = image.luminance();
    let drawing = xdog(&lum, image.height, image.width, params)?;
    let mut pixels = Vec::with_capacity(drawing.len() * 3);
    for v in drawing {
        pixels.extend_from_slice(&[v, v, v]);
    }
    Ok(LabeledImage::new(image.height, image.width, pixels, image.label, Domain::Line, image.source_id.clone()))
}
