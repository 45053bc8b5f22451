//! Procedural shape/texture corpus.
//!
//! Every image shows one object whose outline defines the class. The object is
//! filled with an iso-luminant chromatic texture; with probability
//! `typical_texture` that texture is the one associated with the class, so
//! texture is a partially reliable shortcut. Outlines carry strong luminance
//! contrast and survive line conversion, textures do not.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::{Domain, LabeledImage};
use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SHAPE_NAMES: [&str; 10] =
    ["circle", "square", "triangle", "plus", "ring", "diamond", "star", "frame", "ellipse", "cross"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub resolution: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Probability that an object carries its class texture.
    pub typical_texture: f64,
    /// Number of small distractor shapes per image.
    pub clutter: usize,
    /// Per-pixel uniform chromatic noise amplitude (luma preserved).
    pub noise: f64,
    /// Per-pixel uniform luminance noise amplitude.
    pub luma_noise: f64,
    /// Object size as a fraction of the resolution.
    pub scale_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            resolution: 32,
            train_per_class: 100,
            test_per_class: 100,
            typical_texture: 0.6,
            clutter: 3,
            noise: 0.02,
            luma_noise: 0.06,
            scale_range: (0.2, 0.4),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Texture {
    hue_a: f64,
    hue_b: f64,
    /// Stripe orientation.
    angle: f64,
    period: f64,
    checker: bool,
}

fn class_texture(class: usize) -> Texture {
    let h = class as f64 / SHAPE_NAMES.len() as f64 * 2.0 * PI;
    Texture {
        hue_a: h,
        hue_b: h + 0.9 + 0.25 * (class % 3) as f64,
        angle: (class % 4) as f64 * PI / 4.0,
        period: 3.0 + (class % 3) as f64,
        checker: class % 2 == 1,
    }
}

fn random_texture(rng: &mut impl Rng) -> Texture {
    Texture {
        hue_a: rng.random_range(0.0..2.0 * PI),
        hue_b: rng.random_range(0.0..2.0 * PI),
        angle: rng.random_range(0.0..PI),
        period: rng.random_range(2.5..6.0),
        checker: rng.random_bool(0.5),
    }
}

/// RGB with luma `y` and chroma of magnitude `c` at angle `hue` (YUV, clamped).
fn yuv(y: f64, c: f64, hue: f64) -> [f64; 3] {
    let (u, v) = (c * hue.cos(), c * hue.sin());
    [
        (y + 1.140 * v).clamp(0.0, 1.0),
        (y - 0.395 * u - 0.581 * v).clamp(0.0, 1.0),
        (y + 2.032 * u).clamp(0.0, 1.0),
    ]
}

/// Membership of a point in the canonical shape, coordinates in roughly `[-1, 1]`.
fn inside(class: usize, u: f64, v: f64) -> bool {
    let r = (u * u + v * v).sqrt();
    match class {
        0 => r <= 0.95,
        1 => u.abs().max(v.abs()) <= 0.8,
        2 => (-0.85..=0.75).contains(&v) && u.abs() <= (v + 0.85) * 0.6,
        3 => (u.abs() <= 0.3 && v.abs() <= 0.95) || (v.abs() <= 0.3 && u.abs() <= 0.95),
        4 => (0.5..=0.95).contains(&r),
        5 => u.abs() + v.abs() <= 1.0,
        6 => {
            let theta = v.atan2(u) + PI / 2.0;
            let lobe = ((5.0 * theta).cos() + 1.0) / 2.0;
            r <= 0.4 + 0.6 * lobe * lobe
        }
        7 => {
            let m = u.abs().max(v.abs());
            (0.5..=0.85).contains(&m)
        }
        8 => (u / 1.0).powi(2) + (v / 0.5).powi(2) <= 0.95,
        9 => {
            let (a, b) = ((u + v) / 2f64.sqrt(), (u - v) / 2f64.sqrt());
            (a.abs() <= 0.28 && b.abs() <= 0.95) || (b.abs() <= 0.28 && a.abs() <= 0.95)
        }
        _ => false,
    }
}

struct Placement {
    cy: f64,
    cx: f64,
    scale: f64,
    rot: f64,
}

impl Placement {
    fn coords(&self, y: f64, x: f64) -> (f64, f64) {
        let (dy, dx) = ((y - self.cy) / self.scale, (x - self.cx) / self.scale);
        let (s, c) = self.rot.sin_cos();
        (c * dx + s * dy, -s * dx + c * dy)
    }
}

/// Coverage of `class` at pixel `(y, x)` with 3x3 supersampling.
fn coverage(class: usize, p: &Placement, y: usize, x: usize) -> f64 {
    let mut hit = 0;
    for sy in 0..3 {
        for sx in 0..3 {
            let (u, v) = p.coords(y as f64 + (sy as f64 + 0.5) / 3.0 - 0.5, x as f64 + (sx as f64 + 0.5) / 3.0 - 0.5);
            hit += inside(class, u, v) as u32;
        }
    }
    hit as f64 / 9.0
}

fn texture_rgb(t: &Texture, luma: f64, chroma: f64, y: usize, x: usize) -> [f64; 3] {
    let (s, c) = t.angle.sin_cos();
    let a = (c * x as f64 + s * y as f64) / t.period;
    let stripe = if t.checker {
        let b = (-s * x as f64 + c * y as f64) / t.period;
        (a.floor() as i64 + b.floor() as i64).rem_euclid(2) == 0
    } else {
        a.floor() as i64 % 2 == 0
    };
    yuv(luma, chroma, if stripe { t.hue_a } else { t.hue_b })
}

/// Renders one colour image of `shape` filled with `texture`.
fn render(cfg: &SynthConfig, shape: usize, texture: &Texture, rng: &mut impl Rng) -> Vec<f64> {
    let n = cfg.resolution;
    let res = n as f64;
    let contrast = rng.random_range(0.25..0.6);
    let bg_luma = rng.random_range(0.1..0.9);
    let obj_luma: f64 = if (bg_luma > 0.5) == rng.random_bool(0.8) { bg_luma - contrast } else { bg_luma + contrast };
    let obj_luma = obj_luma.clamp(0.05, 0.95);
    let bg = random_texture(rng);
    let bg_chroma = rng.random_range(0.0..0.08);
    let mut px: Vec<f64> = (0..n * n).flat_map(|i| texture_rgb(&bg, bg_luma, bg_chroma, i / n, i % n)).collect();

    let blend = |px: &mut Vec<f64>, y: usize, x: usize, w: f64, rgb: [f64; 3]| {
        let i = (y * n + x) * 3;
        for c in 0..3 {
            px[i + c] = px[i + c] * (1.0 - w) + rgb[c] * w;
        }
    };

    for _ in 0..cfg.clutter {
        let p = Placement {
            cy: rng.random_range(0.0..res),
            cx: rng.random_range(0.0..res),
            scale: res * rng.random_range(0.08..0.16),
            rot: rng.random_range(0.0..PI),
        };
        let kind = rng.random_range(0..SHAPE_NAMES.len());
        let blob = random_texture(rng);
        let luma = rng.random_range(0.1..0.9);
        for y in 0..n {
            for x in 0..n {
                let w = coverage(kind, &p, y, x);
                if w > 0.0 {
                    let rgb = texture_rgb(&blob, luma, 0.12, y, x);
                    blend(&mut px, y, x, w, rgb);
                }
            }
        }
    }

    let p = Placement {
        cy: res / 2.0 - 0.5 + rng.random_range(-0.1..0.1) * res,
        cx: res / 2.0 - 0.5 + rng.random_range(-0.1..0.1) * res,
        scale: res * rng.random_range(cfg.scale_range.0..cfg.scale_range.1),
        rot: rng.random_range(-0.3..0.3),
    };
    for y in 0..n {
        for x in 0..n {
            let w = coverage(shape, &p, y, x);
            if w > 0.0 {
                let rgb = texture_rgb(texture, obj_luma, 0.16, y, x);
                blend(&mut px, y, x, w, rgb);
            }
        }
    }
    if cfg.noise > 0.0 || cfg.luma_noise > 0.0 {
        for chunk in px.chunks_mut(3) {
            // Opposing red/blue perturbation keeps luma nearly fixed.
            let e: f64 = rng.random_range(-1.0..=1.0) * cfg.noise;
            let l: f64 = rng.random_range(-1.0..=1.0) * cfg.luma_noise;
            chunk[0] = (chunk[0] + e + l).clamp(0.0, 1.0);
            chunk[1] = (chunk[1] + l).clamp(0.0, 1.0);
            chunk[2] = (chunk[2] - e * 0.299 / 0.114 + l).clamp(0.0, 1.0);
        }
    }
    px
}

fn stream(seed: u64, split: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split);
    rng
}

fn generate<T: Scalar>(cfg: &SynthConfig, split: &str, per_class: usize, stream_id: u64) -> Vec<LabeledImage<T>> {
    let mut rng = stream(cfg.seed, stream_id);
    let classes = SHAPE_NAMES.len();
    (0..per_class * classes)
        .map(|i| {
            let shape = i % classes;
            let texture = if rng.random_bool(cfg.typical_texture) {
                class_texture(shape)
            } else {
                class_texture((shape + rng.random_range(1..classes)) % classes)
            };
            let px = render(cfg, shape, &texture, &mut rng).into_iter().map(T::lit).collect();
            let id = format!("{split}/{}/{:05}", SHAPE_NAMES[shape], i / classes);
            LabeledImage::new(cfg.resolution, cfg.resolution, px, shape, Domain::Color, id)
        })
        .collect()
}

/// Generates a balanced colour corpus. Train and test use independent streams.
pub fn shapes_dataset<T: Scalar>(cfg: &SynthConfig) -> Result<Dataset<T>> {
    if cfg.resolution < 8 || cfg.train_per_class == 0 || cfg.test_per_class == 0 {
        return Err(Error::InvalidParams("synthetic corpus needs resolution >= 8 and nonempty splits".into()));
    }
    if !(0.0..=1.0).contains(&cfg.typical_texture) {
        return Err(Error::InvalidParams("typical_texture must be a probability".into()));
    }
    Ok(Dataset {
        name: "shapes".into(),
        class_names: SHAPE_NAMES.iter().map(|s| s.to_string()).collect(),
        domain: Domain::Color,
        train: generate(cfg, "train", cfg.train_per_class, 1),
        test: generate(cfg, "test", cfg.test_per_class, 2),
        fraction: 1.0,
        subset_seed: 0,
        converter_params: None,
    })
}

/// A cue-conflict image: outline of `shape_class` filled with the texture of `texture_class`.
#[derive(Clone, Debug, PartialEq)]
pub struct CueConflictItem<T> {
    pub image: LabeledImage<T>,
    pub shape_class: usize,
    pub texture_class: usize,
}

/// `per_pair` images for every ordered pair of distinct classes.
pub fn cue_conflict_set<T: Scalar>(cfg: &SynthConfig, per_pair: usize) -> Vec<CueConflictItem<T>> {
    let mut rng = stream(cfg.seed, 3);
    let classes = SHAPE_NAMES.len();
    let mut out = Vec::new();
    for shape in 0..classes {
        for texture in (0..classes).filter(|&t| t != shape) {
            for k in 0..per_pair {
                let px = render(cfg, shape, &class_texture(texture), &mut rng).into_iter().map(T::lit).collect();
                let id = format!("cue/{}-{}-{k:03}", SHAPE_NAMES[shape], SHAPE_NAMES[texture]);
                out.push(CueConflictItem {
                    image: LabeledImage::new(cfg.resolution, cfg.resolution, px, shape, Domain::Color, id),
                    shape_class: shape,
                    texture_class: texture,
                });
            }
        }
    }
    out
}

/// Unlabelled sketch-style line images (outlines only) for drawing pretraining.
/// Shapes are drawn from the same family but rendered with independent streams.
pub fn sketch_corpus<T: Scalar>(cfg: &SynthConfig, count: usize, params: &super::XdogParams) -> Result<Vec<LabeledImage<T>>> {
    let mut rng = stream(cfg.seed, 4);
    let classes = SHAPE_NAMES.len();
    (0..count)
        .map(|i| {
            let shape = rng.random_range(0..classes);
            let px = render(cfg, shape, &random_texture(&mut rng), &mut rng).into_iter().map(T::lit).collect();
            let img = LabeledImage::new(cfg.resolution, cfg.resolution, px, shape, Domain::Color, format!("sketch/{i:05}"));
            super::to_line_drawing(&img, params)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_balanced_deterministic_and_in_range() {
        let cfg = SynthConfig { train_per_class: 3, test_per_class: 2, ..Default::default() };
        let a = shapes_dataset::<f32>(&cfg).unwrap();
        let b = shapes_dataset::<f32>(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.test.len()), (30, 20));
        assert!(a.train.iter().chain(&a.test).all(|i| i.in_unit_range()));
        for c in 0..10 {
            assert_eq!(a.train.iter().filter(|i| i.label == c).count(), 3);
        }
        assert_ne!(a.train[0].pixels, a.test[0].pixels);
    }

    #[test]
    fn cue_conflict_pairs_are_distinct() {
        let cfg = SynthConfig::default();
        let set = cue_conflict_set::<f32>(&cfg, 1);
        assert_eq!(set.len(), 90);
        assert!(set.iter().all(|i| i.shape_class != i.texture_class && i.image.label == i.shape_class));
    }
}
