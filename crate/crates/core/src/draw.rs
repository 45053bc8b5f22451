//! Unsupervised learning-to-draw pretraining on unpaired photo and sketch corpora.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{BatchStats, Tape, Var};
use crate::corpus::{eval_view, AugmentationPolicy, Domain, ImageBatch, LabeledImage};
use crate::error::{Error, Result};
use crate::nets::checkpoint::decode_blob;
use crate::nets::layers::BN_MOMENTUM;
use crate::nets::params::update_running_stats;
use crate::nets::{build_draw_networks, Binding, CheckpointArchive, DrawNetworks, Mode, Network};
use crate::optim::Adam;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub adv: f64,
    pub geom: f64,
    pub sem: f64,
    pub cyc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { adv: 1.0, geom: 10.0, sem: 1.0, cyc: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Zero-based epoch from which the learning rate decays linearly to zero.
    pub decay_start_epoch: usize,
    pub weights: LossWeights,
    /// Channel divisor of the encoder trunk (1 or 4).
    pub width_divisor: usize,
    pub seed: u64,
}

impl Default for DrawConfig {
    fn default() -> Self {
        DrawConfig {
            epochs: 200,
            batch_size: 8,
            adam_lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            decay_start_epoch: 100,
            weights: LossWeights::default(),
            width_divisor: 1,
            seed: 0,
        }
    }
}

impl DrawConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        if [w.adv, w.geom, w.sem, w.cyc].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParams(format!("loss weights must be finite and non-negative: {w:?}")));
        }
        if self.decay_start_epoch >= self.epochs {
            return Err(Error::InvalidParams(format!(
                "decay start {} must precede the final epoch {}",
                self.decay_start_epoch, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParams("batch size must be positive".into()));
        }
        if !(self.adam_lr > 0.0 && self.adam_lr.is_finite()) {
            return Err(Error::InvalidParams(format!("learning rate {} must be positive", self.adam_lr)));
        }
        Ok(())
    }

    /// Learning rate for zero-based `epoch`; reaches zero at `epoch == epochs`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.decay_start_epoch {
            return self.adam_lr;
        }
        let left = self.epochs.saturating_sub(epoch) as f64;
        self.adam_lr * left / (self.epochs - self.decay_start_epoch) as f64
    }
}

/// Per-image geometry maps.
#[derive(Clone, Debug)]
pub enum GeometryProvider<T> {
    /// Sobel gradient magnitude of the luminance, scaled to a per-image maximum of 1.
    Sobel,
    /// Precomputed maps keyed by source id, min-max normalized per image.
    Precomputed(BTreeMap<String, Tensor<T>>),
}

/// Embeddings for the semantic loss. The frozen model embeds drawings; photos
/// use precomputed vectors when present and the model otherwise.
#[derive(Clone, Debug)]
pub struct SemanticProvider<T: Scalar> {
    pub model: Network<T>,
    pub precomputed: Option<BTreeMap<String, Tensor<T>>>,
}

#[derive(Clone, Debug)]
pub struct ProviderSet<T: Scalar> {
    pub geometry: GeometryProvider<T>,
    /// Required whenever the semantic weight is positive.
    pub semantic: Option<SemanticProvider<T>>,
}

impl<T: Scalar> ProviderSet<T> {
    pub fn sobel_only() -> Self {
        ProviderSet { geometry: GeometryProvider::Sobel, semantic: None }
    }

    pub fn with_classifier(model: Network<T>) -> Result<Self> {
        if !model.is_classifier() {
            return Err(Error::ArchIncompatible(format!("{} cannot embed images", model.spec().id)));
        }
        Ok(ProviderSet { geometry: GeometryProvider::Sobel, semantic: Some(SemanticProvider { model, precomputed: None }) })
    }

    /// `[1, N, H, W]` geometry maps in `[0, 1]` for a batch.
    pub fn geometry_maps(&self, photos: &[&LabeledImage<T>]) -> Result<Tensor<T>> {
        let Some(first) = photos.first() else {
            return Err(Error::ProviderFailure("empty photo batch".into()));
        };
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(photos.len() * h * w);
        for img in photos {
            let map = match &self.geometry {
                GeometryProvider::Sobel => sobel_magnitude(&img.luminance(), h, w),
                GeometryProvider::Precomputed(maps) => {
                    let t = maps.get(&img.source_id).ok_or_else(|| {
                        Error::ProviderFailure(format!("no precomputed geometry map for `{}`", img.source_id))
                    })?;
                    if t.numel() != h * w {
                        return Err(Error::ProviderFailure(format!(
                            "geometry map for `{}` has {} values, image is {h}x{w}",
                            img.source_id,
                            t.numel()
                        )));
                    }
                    min_max(t.data())
                }
            };
            if map.iter().any(|v| !v.is_finite()) {
                return Err(Error::ProviderFailure(format!("non-finite geometry map for `{}`", img.source_id)));
            }
            data.extend(map);
        }
        Tensor::from_vec(&[1, photos.len(), h, w], data)
    }

    fn photo_embeddings(&self, photos: &[&LabeledImage<T>]) -> Result<Tensor<T>> {
        let sem = self.semantic.as_ref().ok_or_else(|| Error::ProviderFailure("no semantic provider".into()))?;
        let out = match &sem.precomputed {
            Some(table) => {
                let mut rows = Vec::new();
                let mut width = None;
                for img in photos {
                    let t = table.get(&img.source_id).ok_or_else(|| {
                        Error::ProviderFailure(format!("no precomputed embedding for `{}`", img.source_id))
                    })?;
                    if *width.get_or_insert(t.numel()) != t.numel() {
                        return Err(Error::ProviderFailure("precomputed embeddings differ in width".into()));
                    }
                    rows.extend_from_slice(t.data());
                }
                Tensor::from_vec(&[photos.len(), width.unwrap_or(0)], rows)?
            }
            None => crate::nets::penultimate_features(&sem.model, &ImageBatch::from_images(photos.iter().copied()))?,
        };
        if !out.is_finite() {
            return Err(Error::ProviderFailure("non-finite photo embedding".into()));
        }
        Ok(out)
    }
}

/// Sobel gradient magnitude with clamped borders, divided by its maximum.
pub fn sobel_magnitude<T: Scalar>(gray: &[T], h: usize, w: usize) -> Vec<T> {
    let at = |y: isize, x: isize| gray[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];
    let two = T::lit(2.0);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(y - 1, x + 1) - at(y - 1, x - 1))
                + two * (at(y, x + 1) - at(y, x - 1))
                + (at(y + 1, x + 1) - at(y + 1, x - 1));
            let gy = (at(y + 1, x - 1) - at(y - 1, x - 1))
                + two * (at(y + 1, x) - at(y - 1, x))
                + (at(y + 1, x + 1) - at(y - 1, x + 1));
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    let max = out.iter().copied().fold(T::zero(), T::max);
    if max > T::zero() {
        out.iter_mut().for_each(|v| *v = *v / max);
    }
    out
}

fn min_max<T: Scalar>(values: &[T]) -> Vec<T> {
    let lo = values.iter().copied().fold(T::infinity(), T::min);
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
    if hi > lo {
        values.iter().map(|&v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![T::zero(); values.len()]
    }
}

/// Loads every `*.bin` tensor blob under `dir`, keyed by its relative path without extension.
pub fn load_precomputed<T: Scalar>(dir: &Path) -> Result<BTreeMap<String, Tensor<T>>> {
    if !dir.is_dir() {
        return Err(Error::MissingData(format!("{} is not a directory", dir.display())));
    }
    let mut out = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::MissingData(e.to_string()))?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().is_none_or(|e| e != "bin") {
            continue;
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (_, t) = decode_blob::<T>(&bytes).map_err(|d| Error::format(path, d))?;
        let rel = path.strip_prefix(dir).expect("walk stays under root").with_extension("");
        let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        out.insert(key, t);
    }
    Ok(out)
}

/// Loss values of one generator evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DrawLossValues {
    pub adv: f64,
    pub geom: f64,
    pub sem: f64,
    pub cyc: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug)]
struct LossVars {
    adv: Var,
    geom: Var,
    sem: Var,
    cyc: Var,
    total: Var,
}

impl LossVars {
    fn values<T: Scalar>(&self, tape: &Tape<T>) -> DrawLossValues {
        let v = |x: Var| tape.value(x).item().as_f64();
        DrawLossValues { adv: v(self.adv), geom: v(self.geom), sem: v(self.sem), cyc: v(self.cyc), total: v(self.total) }
    }
}

/// `1/2 mean((d_real - 1)^2) + 1/2 mean(d_fake^2)`.
pub fn lsgan_discriminator_loss<T: Scalar>(tape: &mut Tape<T>, d_real: Var, d_fake: Var) -> Var {
    let ones = Tensor::full(tape.value(d_real).shape(), T::one());
    let zeros = Tensor::zeros(tape.value(d_fake).shape());
    let real = tape.mse(d_real, &ones);
    let fake = tape.mse(d_fake, &zeros);
    let half = T::lit(0.5);
    tape.weighted_sum(&[(real, half), (fake, half)])
}

/// `1/2 mean((d_fake - 1)^2)`.
pub fn lsgan_generator_loss<T: Scalar>(tape: &mut Tape<T>, d_fake: Var) -> Var {
    let ones = Tensor::full(tape.value(d_fake).shape(), T::one());
    let l = tape.mse(d_fake, &ones);
    tape.weighted_sum(&[(l, T::lit(0.5))])
}

/// Mean squared difference between `1 - drawing` and the geometry map.
pub fn geometry_loss<T: Scalar>(tape: &mut Tape<T>, drawings: Var, geometry: &Tensor<T>) -> Var {
    let ink = tape.affine(drawings, -T::one(), T::one());
    tape.mse(ink, geometry)
}

/// Mean absolute difference between the recovered photo and the grayscale photo.
pub fn cycle_loss<T: Scalar>(tape: &mut Tape<T>, recovered: Var, gray: &Tensor<T>) -> Var {
    tape.l1(recovered, gray)
}

struct Bound<'a, 'p, T: Scalar> {
    net: &'a Network<T>,
    bind: &'a mut Binding<'p, T>,
}

/// Builds every generator loss term for `drawings` (`[1, N, H, W]`) on the tape.
fn loss_terms<T: Scalar>(
    tape: &mut Tape<T>,
    drawings: Var,
    photos: &[&LabeledImage<T>],
    recovery: Bound<'_, '_, T>,
    discriminator: Bound<'_, '_, T>,
    providers: &ProviderSet<T>,
    weights: &LossWeights,
) -> Result<LossVars> {
    let batch = ImageBatch::from_images(photos.iter().copied());
    let zero = || Tensor::scalar(T::zero());

    let adv = if weights.adv > 0.0 {
        let d_fake = discriminator.net.apply(tape, discriminator.bind, drawings)?;
        lsgan_generator_loss(tape, d_fake)
    } else {
        tape.constant(zero())
    };

    let geometry = providers.geometry_maps(photos)?;
    let geom = geometry_loss(tape, drawings, &geometry);

    let sem = if weights.sem > 0.0 {
        let target = providers.photo_embeddings(photos)?;
        let model = &providers.semantic.as_ref().expect("checked by photo_embeddings").model;
        let mut frozen = Binding::frozen(model.params());
        let rgb = tape.concat(&[drawings, drawings, drawings]);
        let emb = model.classify(tape, &mut frozen, rgb)?.penultimate;
        if tape.value(emb).shape() != target.shape() {
            return Err(Error::ProviderFailure(format!(
                "embedding width mismatch: drawing {:?} vs photo {:?}",
                tape.value(emb).shape(),
                target.shape()
            )));
        }
        tape.cosine_distance(emb, &target)
    } else {
        tape.constant(zero())
    };

    let recovered = recovery.net.apply(tape, recovery.bind, drawings)?;
    let cyc = cycle_loss(tape, recovered, &batch.to_gray_tensor());

    let terms = [(adv, weights.adv), (geom, weights.geom), (sem, weights.sem), (cyc, weights.cyc)];
    let total = tape.weighted_sum(&terms.map(|(v, w)| (v, T::lit(w))));
    let lv = LossVars { adv, geom, sem, cyc, total };
    let values = lv.values(tape);
    if [values.adv, values.geom, values.sem, values.cyc, values.total].iter().any(|v| !v.is_finite()) {
        return Err(Error::ProviderFailure(format!("non-finite draw loss {values:?}")));
    }
    Ok(lv)
}

/// Evaluation-mode drawings `[1, N, H, W]` for a photo batch.
pub fn draw_forward<T: Scalar>(encoder: &Network<T>, decoder: &Network<T>, photos: &ImageBatch<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let mut eb = Binding::frozen(encoder.params());
    let mut db = Binding::frozen(decoder.params());
    let x = tape.constant(photos.to_tensor());
    let fused = encoder.encode(&mut tape, &mut eb, x)?.fused;
    let d = decoder.apply(&mut tape, &mut db, fused)?;
    Ok(tape.value(d).clone())
}

/// Generator loss components for given drawings, with all networks frozen.
pub fn draw_losses<T: Scalar>(
    drawings: &Tensor<T>,
    photos: &[LabeledImage<T>],
    nets: &DrawNetworks<T>,
    providers: &ProviderSet<T>,
    weights: &LossWeights,
) -> Result<DrawLossValues> {
    let refs: Vec<&LabeledImage<T>> = photos.iter().collect();
    let mut tape = Tape::new();
    let d = tape.constant(drawings.clone());
    let mut rb = Binding::frozen(nets.recovery.params());
    let mut db = Binding::frozen(nets.discriminator.params());
    let lv = loss_terms(
        &mut tape,
        d,
        &refs,
        Bound { net: &nets.recovery, bind: &mut rb },
        Bound { net: &nets.discriminator, bind: &mut db },
        providers,
        weights,
    )?;
    Ok(lv.values(&tape))
}

/// One discriminator update on real sketches and detached fake drawings (both `[1, N, H, W]`).
/// LSGAN discriminator loss and its parameter gradients in training mode.
pub fn discriminator_gradients<T: Scalar>(
    discriminator: &Network<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
) -> Result<(f64, HashMap<String, Tensor<T>>, Vec<(String, BatchStats<T>)>)> {
    if real.numel() == 0 || fake.numel() == 0 {
        return Err(Error::EmptyCorpus("discriminator needs real and fake samples".into()));
    }
    let mut tape = Tape::new();
    let mut bind = Binding::new(discriminator.params(), Mode::Train, true);
    let r = tape.constant(real.clone());
    let f = tape.constant(fake.clone());
    let dr = discriminator.apply(&mut tape, &mut bind, r)?;
    let df = discriminator.apply(&mut tape, &mut bind, f)?;
    let loss = lsgan_discriminator_loss(&mut tape, dr, df);
    let value = tape.value(loss).item().as_f64();
    let grads = bind.gradients(&tape.backward(loss));
    Ok((value, grads, bind.into_stats()))
}

/// One Adam step on the discriminator. Returns the loss before the update.
pub fn discriminator_step<T: Scalar>(
    discriminator: &mut Network<T>,
    opt: &mut Adam<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    lr: T,
) -> Result<f64> {
    let (value, grads, stats) = discriminator_gradients(discriminator, real, fake)?;
    opt.step(discriminator.params_mut(), &grads, lr);
    update_running_stats(discriminator.params_mut(), &stats, T::lit(BN_MOMENTUM));
    Ok(value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawEpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub generator: DrawLossValues,
    pub discriminator: f64,
}

#[derive(Clone, Debug)]
pub struct DrawResult<T: Scalar> {
    /// Encoder checkpoint with stage history `[DRAW]`.
    pub encoder: CheckpointArchive<T>,
    pub networks: DrawNetworks<T>,
    pub history: Vec<DrawEpochStats>,
    pub wall_time: Duration,
}

fn prepare<T: Scalar>(images: &[LabeledImage<T>], resolution: usize) -> Result<Vec<LabeledImage<T>>> {
    let policy = AugmentationPolicy { allow_upscale: true, ..AugmentationPolicy::identity(resolution) };
    images
        .iter()
        .map(|img| if img.height == resolution && img.width == resolution { Ok(img.clone()) } else { eval_view(img, &policy) })
        .collect()
}

/// Trains encoder, decoder, recovery and discriminator with alternating Adam updates.
///
/// Photos and sketches are drawn through two independently seeded shuffles.
pub fn train_draw<T: Scalar>(
    photos: &[LabeledImage<T>],
    sketches: &[LabeledImage<T>],
    resolution: usize,
    config: &DrawConfig,
    providers: &ProviderSet<T>,
    on_epoch: &mut dyn FnMut(&DrawEpochStats),
) -> Result<DrawResult<T>> {
    config.validate()?;
    if photos.is_empty() {
        return Err(Error::EmptyCorpus("photo corpus is empty".into()));
    }
    if sketches.is_empty() && config.weights.adv > 0.0 {
        return Err(Error::EmptyCorpus("sketch corpus is empty".into()));
    }
    if config.weights.sem > 0.0 && providers.semantic.is_none() {
        return Err(Error::InvalidParams("semantic weight is positive but no semantic provider is set".into()));
    }
    let started = Instant::now();
    let photos = prepare(photos, resolution)?;
    let sketches = prepare(sketches, resolution)?;
    let mut nets = build_draw_networks::<T>(resolution, config.width_divisor, config.seed)?;
    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let (mut opt_e, mut opt_g, mut opt_r, mut opt_d) = (Adam::new(b1, b2), Adam::new(b1, b2), Adam::new(b1, b2), Adam::new(b1, b2));
    let mut photo_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5048_4f54);
    let mut sketch_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x534b_4554);
    let mut photo_order: Vec<usize> = (0..photos.len()).collect();
    let mut sketch_order: Vec<usize> = (0..sketches.len()).collect();
    let mut sketch_pos = sketch_order.len();
    let mut history = Vec::new();

    for epoch in 0..config.epochs {
        let lr_f = config.lr_at(epoch);
        let lr = T::lit(lr_f);
        photo_order.shuffle(&mut photo_rng);
        let mut sums = DrawLossValues::default();
        let mut disc_sum = 0.0;
        let mut steps = 0usize;
        for (step, idx) in photo_order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&LabeledImage<T>> = idx.iter().map(|&i| &photos[i]).collect();

            let mut tape = Tape::new();
            let mut eb = Binding::new(nets.encoder.params(), Mode::Train, true);
            let mut gb = Binding::new(nets.decoder.params(), Mode::Train, true);
            let mut rb = Binding::new(nets.recovery.params(), Mode::Train, true);
            let mut db = Binding::frozen(nets.discriminator.params());
            let x = tape.constant(ImageBatch::from_images(batch.iter().copied()).to_tensor());
            let fused = nets.encoder.encode(&mut tape, &mut eb, x)?.fused;
            let drawings = nets.decoder.apply(&mut tape, &mut gb, fused)?;
            let lv = loss_terms(
                &mut tape,
                drawings,
                &batch,
                Bound { net: &nets.recovery, bind: &mut rb },
                Bound { net: &nets.discriminator, bind: &mut db },
                providers,
                &config.weights,
            )
            .map_err(|e| match e {
                Error::ProviderFailure(d) => Error::NonFiniteLoss { epoch: epoch + 1, step, detail: d },
                other => other,
            })?;
            let values = lv.values(&tape);
            let fake = tape.value(drawings).clone();
            let grads = tape.backward(lv.total);
            let (ge, gg, gr) = (eb.gradients(&grads), gb.gradients(&grads), rb.gradients(&grads));
            let (se, sg, sr) = (eb.into_stats(), gb.into_stats(), rb.into_stats());
            drop(db);
            drop(tape);
            let momentum = T::lit(BN_MOMENTUM);
            opt_e.step(nets.encoder.params_mut(), &ge, lr);
            update_running_stats(nets.encoder.params_mut(), &se, momentum);
            opt_g.step(nets.decoder.params_mut(), &gg, lr);
            update_running_stats(nets.decoder.params_mut(), &sg, momentum);
            opt_r.step(nets.recovery.params_mut(), &gr, lr);
            update_running_stats(nets.recovery.params_mut(), &sr, momentum);

            if config.weights.adv > 0.0 {
                let mut real = Vec::with_capacity(batch.len());
                while real.len() < batch.len() {
                    if sketch_pos == sketch_order.len() {
                        sketch_order.shuffle(&mut sketch_rng);
                        sketch_pos = 0;
                    }
                    real.push(&sketches[sketch_order[sketch_pos]]);
                    sketch_pos += 1;
                }
                let real = ImageBatch::from_images(real).to_gray_tensor();
                disc_sum += discriminator_step(&mut nets.discriminator, &mut opt_d, &real, &fake, lr)?;
            }
            for (acc, v) in [
                (&mut sums.adv, values.adv),
                (&mut sums.geom, values.geom),
                (&mut sums.sem, values.sem),
                (&mut sums.cyc, values.cyc),
                (&mut sums.total, values.total),
            ] {
                *acc += v;
            }
            steps += 1;
        }
        if ![&nets.encoder, &nets.decoder, &nets.recovery, &nets.discriminator].iter().all(|n| n.params().is_finite()) {
            return Err(Error::NonFiniteLoss { epoch: epoch + 1, step: steps, detail: "parameters diverged".into() });
        }
        let k = steps as f64;
        let stats = DrawEpochStats {
            epoch: epoch + 1,
            lr: lr_f,
            generator: DrawLossValues {
                adv: sums.adv / k,
                geom: sums.geom / k,
                sem: sums.sem / k,
                cyc: sums.cyc / k,
                total: sums.total / k,
            },
            discriminator: disc_sum / k,
        };
        on_epoch(&stats);
        history.push(stats);
    }

    let mut encoder = CheckpointArchive::from_network(&nets.encoder, vec![Domain::Draw], config.seed, config.epochs);
    if let Some(last) = history.last() {
        encoder.manifest.metrics.insert("draw_total".into(), last.generator.total);
    }
    Ok(DrawResult { encoder, networks: nets, history, wall_time: started.elapsed() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule() {
        let c = DrawConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.adam_lr), (200, 8, 2e-4));
        assert_eq!(c.lr_at(0), 2e-4);
        assert_eq!(c.lr_at(99), 2e-4);
        assert_eq!(c.lr_at(100), 2e-4);
        assert!((c.lr_at(150) - 1e-4).abs() < 1e-15);
        assert_eq!(c.lr_at(200), 0.0);
        let bad = DrawConfig { decay_start_epoch: 200, ..DrawConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sobel_of_constant_and_step() {
        assert!(sobel_magnitude(&[0.7f64; 16], 4, 4).iter().all(|&v| v == 0.0));
        // Vertical step: columns 0-1 dark, 2-3 bright; peak response at the edge columns.
        let img: Vec<f64> = (0..16).map(|i| if i % 4 >= 2 { 1.0 } else { 0.0 }).collect();
        let m = sobel_magnitude(&img, 4, 4);
        assert_eq!(m[1], 1.0);
        assert_eq!(m[2], 1.0);
        assert_eq!(m[0], 0.0);
        assert_eq!(m[3], 0.0);
    }

    #[test]
    fn lsgan_values() {
        let mut tape = Tape::<f64>::new();
        let r = tape.constant(Tensor::full(&[1, 2, 3, 3], 1.0));
        let f = tape.constant(Tensor::zeros(&[1, 2, 3, 3]));
        let l = lsgan_discriminator_loss(&mut tape, r, f);
        assert_eq!(tape.value(l).item(), 0.0);
        let h = tape.constant(Tensor::full(&[1, 2, 3, 3], 0.5));
        let l = lsgan_discriminator_loss(&mut tape, h, h);
        assert!((tape.value(l).item() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn toy_discriminator_gradient_matches_finite_differences() {
        // D(x) = a x + b on scalar samples.
        let real = Tensor::from_vec(&[4, 1], vec![0.9, 0.7, 1.0, 0.8]).unwrap();
        let fake = Tensor::from_vec(&[3, 1], vec![0.1, 0.4, 0.2]).unwrap();
        let eval = |a: f64, b: f64| {
            let mut tape = Tape::<f64>::new();
            let w = tape.leaf(Tensor::from_vec(&[1, 1], vec![a]).unwrap(), true);
            let bias = tape.leaf(Tensor::from_vec(&[1], vec![b]).unwrap(), true);
            let xr = tape.constant(real.clone());
            let xf = tape.constant(fake.clone());
            let dr = tape.linear(xr, w, bias);
            let df = tape.linear(xf, w, bias);
            let loss = lsgan_discriminator_loss(&mut tape, dr, df);
            let g = tape.backward(loss);
            (tape.value(loss).item(), g.get(w).unwrap().item(), g.get(bias).unwrap().item())
        };
        let (a, b) = (0.3, -0.2);
        let (_, ga, gb) = eval(a, b);
        let h = 1e-6;
        let fa = (eval(a + h, b).0 - eval(a - h, b).0) / (2.0 * h);
        let fb = (eval(a, b + h).0 - eval(a, b - h).0) / (2.0 * h);
        assert!((ga - fa).abs() <= 1e-3 * fa.abs().max(1e-12), "{ga} vs {fa}");
        assert!((gb - fb).abs() <= 1e-3 * fb.abs().max(1e-12), "{gb} vs {fb}");
    }

    #[test]
    fn geometry_and_cycle_identities() {
        let mut tape = Tape::<f64>::new();
        let white = tape.constant(Tensor::full(&[1, 1, 4, 4], 1.0));
        let flat = sobel_magnitude(&[0.3; 16], 4, 4);
        let g = geometry_loss(&mut tape, white, &Tensor::from_vec(&[1, 1, 4, 4], flat).unwrap());
        assert_eq!(tape.value(g).item(), 0.0);
        let gray = Tensor::from_vec(&[1, 1, 2, 2], vec![0.1, 0.5, 0.25, 0.9]).unwrap();
        let rec = tape.constant(gray.clone());
        let c = cycle_loss(&mut tape, rec, &gray);
        assert_eq!(tape.value(c).item(), 0.0);
    }
}
