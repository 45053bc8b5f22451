//! Representation probes: Grad-CAM, attention regions, tuning curves, PCA and shape bias.

mod eigen;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use self::eigen::symmetric_eigenvalues;
use crate::autograd::{Tape, Var};
use crate::corpus::synth::CueConflictItem;
use crate::corpus::{eval_view, AugmentationPolicy, ImageBatch, LabeledImage};
use crate::error::{Error, Result};
use crate::nets::checkpoint::{decode_blob, encode_blob};
use crate::nets::{Binding, Network, EVAL_CHUNK};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::train::predict;

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    /// Row-major `H x W` in `[0, 1]`.
    pub values: Vec<f64>,
    pub source_id: String,
    pub class_idx: usize,
}

/// A model whose logits and an intermediate feature map can be recorded on a tape.
pub trait CamModel<T: Scalar> {
    /// Returns `([N, K] logits, [C, N, h, w] feature map)` for a `[3, N, H, W]` input.
    fn logits_and_layer(&self, tape: &mut Tape<T>, x: Var, layer: &str) -> Result<(Var, Var)>;
}

impl<T: Scalar> CamModel<T> for Network<T> {
    fn logits_and_layer(&self, tape: &mut Tape<T>, x: Var, layer: &str) -> Result<(Var, Var)> {
        let mut bind = Binding::frozen(self.params());
        let out = self.classify(tape, &mut bind, x)?;
        let fm = out.feature_map(layer)?;
        Ok((out.logits, fm))
    }
}

/// Bilinear resize with half-pixel centres (no corner alignment), borders clamped.
pub fn upsample_bilinear(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * h as f64 / out_h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let (y0, ty) = (fy.floor() as usize, fy - fy.floor());
        let y1 = (y0 + 1).min(h - 1);
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * w as f64 / out_w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let (x0, tx) = (fx.floor() as usize, fx - fx.floor());
            let x1 = (x0 + 1).min(w - 1);
            let top = src[y0 * w + x0] * (1.0 - tx) + src[y0 * w + x1] * tx;
            let bottom = src[y1 * w + x0] * (1.0 - tx) + src[y1 * w + x1] * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// `ReLU(sum_k alpha_k A_k)` upsampled to `out_h x out_w` and divided by its maximum.
///
/// `activations` is `C x h x w`. An all-zero map is returned unchanged.
pub fn cam_from_activations(
    activations: &[f64],
    weights: &[f64],
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    let mut raw = vec![0.0; h * w];
    for (k, &a) in weights.iter().enumerate() {
        for (r, &v) in raw.iter_mut().zip(&activations[k * h * w..(k + 1) * h * w]) {
            *r += a * v;
        }
    }
    raw.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut up = upsample_bilinear(&raw, h, w, out_h, out_w);
    let max = up.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        up.iter_mut().for_each(|v| *v = (*v / max).clamp(0.0, 1.0));
    }
    up
}

/// Grad-CAM channel weights and activations for a batch: per image `(alpha [C], A [C*h*w])`.
pub fn cam_weights<T: Scalar, M: CamModel<T> + ?Sized>(
    model: &M,
    batch: &ImageBatch<T>,
    classes: &[usize],
    layer: &str,
) -> Result<(Vec<(Vec<f64>, Vec<f64>)>, usize, usize)> {
    let mut tape = Tape::new();
    // A gradient leaf at the input makes every downstream node, the probed layer
    // included, take part in the backward pass even when parameters are frozen.
    let x = tape.leaf(batch.to_tensor(), true);
    let (logits, fm) = model.logits_and_layer(&mut tape, x, layer)?;
    // Samples are independent in evaluation mode, so one backward pass over the
    // sum of the selected logits yields every image's own gradient.
    let terms: Vec<(usize, usize)> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let target = select_entries(&mut tape, logits, &terms);
    let grads = tape.backward(target);
    let a = tape.value(fm);
    let s = a.shape().to_vec();
    let (ch, n, h, w) = (s[0], s[1], s[2], s[3]);
    let zero = Tensor::zeros(&s);
    let g = grads.get(fm).unwrap_or(&zero);
    let mut out = Vec::with_capacity(n);
    for b in 0..n {
        let mut alpha = vec![0.0; ch];
        let mut acts = vec![0.0; ch * h * w];
        for k in 0..ch {
            let off = (k * n + b) * h * w;
            alpha[k] = g.data()[off..off + h * w].iter().map(|v| v.as_f64()).sum::<f64>() / (h * w) as f64;
            for (d, v) in acts[k * h * w..(k + 1) * h * w].iter_mut().zip(&a.data()[off..off + h * w]) {
                *d = v.as_f64();
            }
        }
        out.push((alpha, acts));
    }
    Ok((out, h, w))
}

/// Sum of `logits[row, class]` over `(class, row)` pairs.
fn select_entries<T: Scalar>(tape: &mut Tape<T>, logits: Var, picks: &[(usize, usize)]) -> Var {
    let shape = tape.value(logits).shape().to_vec();
    let mut mask = Tensor::zeros(&shape);
    for &(c, r) in picks {
        mask.data_mut()[r * shape[1] + c] = T::one();
    }
    tape.masked_sum(logits, &mask)
}

/// Grad-CAM saliency of one image for `class_idx` at `target_layer`.
pub fn grad_cam<T: Scalar, M: CamModel<T> + ?Sized>(
    model: &M,
    image: &LabeledImage<T>,
    class_idx: usize,
    target_layer: &str,
) -> Result<SaliencyMap> {
    Ok(grad_cam_batch(model, std::slice::from_ref(image), &[class_idx], target_layer)?.remove(0))
}

/// Grad-CAM for many images at once.
pub fn grad_cam_batch<T: Scalar, M: CamModel<T> + ?Sized>(
    model: &M,
    images: &[LabeledImage<T>],
    classes: &[usize],
    target_layer: &str,
) -> Result<Vec<SaliencyMap>> {
    let mut maps = Vec::with_capacity(images.len());
    for (chunk, cls) in images.chunks(EVAL_CHUNK).zip(classes.chunks(EVAL_CHUNK)) {
        let batch = ImageBatch::from_images(chunk);
        let (per_image, h, w) = cam_weights(model, &batch, cls, target_layer)?;
        for ((alpha, acts), (img, &c)) in per_image.into_iter().zip(chunk.iter().zip(cls)) {
            maps.push(SaliencyMap {
                height: img.height,
                width: img.width,
                values: cam_from_activations(&acts, &alpha, h, w, img.height, img.width),
                source_id: img.source_id.clone(),
                class_idx: c,
            });
        }
    }
    Ok(maps)
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Number of connected components of `{v > percentile(values, p)}`.
pub fn count_regions(values: &[f64], height: usize, width: usize, p: f64, connectivity: Connectivity) -> usize {
    assert_eq!(values.len(), height * width);
    if values.is_empty() {
        return 0;
    }
    let t = percentile(values, p);
    let mask: Vec<bool> = values.iter().map(|&v| v > t).collect();
    count_components(&mask, height, width, connectivity)
}

/// Connected components of a binary mask (union-find over a raster scan).
pub fn count_components(mask: &[bool], height: usize, width: usize, connectivity: Connectivity) -> usize {
    let mut parent: Vec<usize> = (0..mask.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut union = |a: usize, b: usize| {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    };
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !mask[i] {
                continue;
            }
            if x > 0 && mask[i - 1] {
                union(i, i - 1);
            }
            if y > 0 {
                if mask[i - width] {
                    union(i, i - width);
                }
                if connectivity == Connectivity::Eight {
                    if x > 0 && mask[i - width - 1] {
                        union(i, i - width - 1);
                    }
                    if x + 1 < width && mask[i - width + 1] {
                        union(i, i - width + 1);
                    }
                }
            }
        }
    }
    (0..mask.len()).filter(|&i| mask[i] && find(&mut parent, i) == i).count()
}

pub fn count_high_regions(map: &SaliencyMap, percentile: f64, connectivity: Connectivity) -> Result<usize> {
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::InvalidParams(format!("percentile {percentile} outside (0, 100)")));
    }
    Ok(count_regions(&map.values, map.height, map.width, percentile, connectivity))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionHistogram {
    pub one: usize,
    pub two: usize,
    pub three_plus: usize,
    /// Images without any region, reported outside the buckets.
    pub zero: usize,
}

impl RegionHistogram {
    pub fn from_counts(counts: &[usize]) -> Self {
        let mut h = RegionHistogram::default();
        for &c in counts {
            match c {
                0 => h.zero += 1,
                1 => h.one += 1,
                2 => h.two += 1,
                _ => h.three_plus += 1,
            }
        }
        h
    }

    pub fn bucketed(&self) -> usize {
        self.one + self.two + self.three_plus
    }

    /// Share of bucketed images with exactly one region.
    pub fn single_share(&self) -> f64 {
        if self.bucketed() == 0 {
            0.0
        } else {
            self.one as f64 / self.bucketed() as f64
        }
    }
}

/// Grad-CAM at the predicted class, then region counting, tallied over a test set.
pub fn region_histogram<T: Scalar>(
    model: &Network<T>,
    images: &[LabeledImage<T>],
    policy: &AugmentationPolicy,
    percentile: f64,
    connectivity: Connectivity,
) -> Result<RegionHistogram> {
    if images.is_empty() {
        return Err(Error::EmptyDataset("region histogram needs images".into()));
    }
    let layer = model.final_conv_layer().ok_or_else(|| Error::UnknownLayer("no convolutional layer".into()))?;
    let views = images.iter().map(|i| eval_view(i, policy)).collect::<Result<Vec<_>>>()?;
    let preds = predict(model, &views, policy)?;
    let maps = grad_cam_batch(model, &views, &preds, &layer)?;
    let counts = maps.iter().map(|m| count_high_regions(m, percentile, connectivity)).collect::<Result<Vec<_>>>()?;
    Ok(RegionHistogram::from_counts(&counts))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningCurve {
    /// Normalized channel means, descending.
    pub values: Vec<f64>,
    pub n_images: usize,
}

/// Normalizes channel means by their maximum and sorts them descending.
pub fn tuning_from_means(means: &[f64], n_images: usize) -> TuningCurve {
    let max = means.iter().cloned().fold(0.0, f64::max);
    let mut values: Vec<f64> = if max > 0.0 { means.iter().map(|m| (m / max).max(0.0)).collect() } else { vec![0.0; means.len()] };
    values.sort_by(|a, b| b.total_cmp(a));
    TuningCurve { values, n_images }
}

/// Channel means of the final convolutional feature map over the first `n_images`.
pub fn tuning_curve<T: Scalar>(
    model: &Network<T>,
    images: &[LabeledImage<T>],
    policy: &AugmentationPolicy,
    n_images: usize,
) -> Result<TuningCurve> {
    if n_images == 0 || n_images > images.len() {
        return Err(Error::InvalidParams(format!("n_images {n_images} not in 1..={}", images.len())));
    }
    let layer = model.final_conv_layer().ok_or_else(|| Error::UnknownLayer("no convolutional layer".into()))?;
    let mut sums: Vec<f64> = Vec::new();
    let mut hw = 1;
    for chunk in images[..n_images].chunks(EVAL_CHUNK) {
        let views = chunk.iter().map(|i| eval_view(i, policy)).collect::<Result<Vec<_>>>()?;
        let batch = ImageBatch::from_images(&views);
        let mut tape = Tape::new();
        let x = tape.constant(batch.to_tensor());
        let (_, fm) = model.logits_and_layer(&mut tape, x, &layer)?;
        let a = tape.value(fm);
        let (c, per) = (a.shape()[0], a.numel() / a.shape()[0]);
        hw = a.shape()[2] * a.shape()[3];
        sums.resize(c, 0.0);
        for k in 0..c {
            sums[k] += a.data()[k * per..(k + 1) * per].iter().map(|v| v.as_f64()).sum::<f64>();
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / (n_images * hw) as f64).collect();
    Ok(tuning_from_means(&means, n_images))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    /// Covariance eigenvalues, descending and non-negative.
    pub eigenvalues: Vec<f64>,
    pub cumulative_variance: Vec<f64>,
    pub n_samples: usize,
    pub dim: usize,
}

/// Tolerance on the cumulative-variance comparison in [`pcs_to_variance`].
pub const VARIANCE_TOLERANCE: f64 = 1e-9;

/// PCA of an `[N, D]` matrix via the eigenvalues of its sample covariance.
pub fn pca_report<T: Scalar>(features: &Tensor<T>) -> Result<PcaReport> {
    let s = features.shape();
    if s.len() != 2 {
        return Err(Error::ShapeMismatch(format!("expected an [N, D] matrix, got {s:?}")));
    }
    let (n, d) = (s[0], s[1]);
    if n < 2 {
        return Err(Error::DegenerateInput(format!("PCA needs at least 2 samples, got {n}")));
    }
    let x: Vec<f64> = features.data().iter().map(|v| v.as_f64()).collect();
    let mut mean = vec![0.0; d];
    for row in x.chunks(d) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<f64> = x.chunks(d).flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect::<Vec<_>>()).collect();
    let mut cov = vec![0.0; d * d];
    for row in centered.chunks(d) {
        for i in 0..d {
            if row[i] == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i * d + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (n - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    let mut eigenvalues: Vec<f64> = symmetric_eigenvalues(&cov, d).into_iter().map(|v| v.max(0.0)).collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput("features have zero variance".into()));
    }
    let mut acc = 0.0;
    let mut cumulative_variance: Vec<f64> = eigenvalues
        .iter()
        .map(|e| {
            acc += e;
            (acc / total).min(1.0)
        })
        .collect();
    *cumulative_variance.last_mut().expect("d >= 1") = 1.0;
    Ok(PcaReport { eigenvalues, cumulative_variance, n_samples: n, dim: d })
}

/// Smallest `m` with `cumulative_variance[m - 1] >= theta` (up to [`VARIANCE_TOLERANCE`]).
pub fn pcs_to_variance(report: &PcaReport, theta: f64) -> Result<usize> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParams(format!("variance threshold {theta} outside (0, 1]")));
    }
    Ok(report.cumulative_variance.iter().position(|&c| c >= theta - VARIANCE_TOLERANCE).map_or(report.dim, |i| i + 1))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CueCounts {
    pub shape: usize,
    pub texture: usize,
    pub other: usize,
}

impl CueCounts {
    /// `shape / (shape + texture)`, undefined without cue decisions.
    pub fn fraction(&self) -> Option<f64> {
        let d = self.shape + self.texture;
        (d > 0).then(|| self.shape as f64 / d as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeBiasReport {
    /// Indexed by shape class.
    pub per_class: Vec<CueCounts>,
    pub overall: CueCounts,
}

/// Tallies `(prediction, shape_class, texture_class)` decisions; `class_map[c]` is
/// the model class for benchmark class `c`.
pub fn shape_bias_from_predictions(decisions: &[(usize, usize, usize)], class_map: &[usize]) -> ShapeBiasReport {
    let mut per_class = vec![CueCounts::default(); class_map.len()];
    let mut overall = CueCounts::default();
    for &(pred, shape, texture) in decisions {
        let slot = if pred == class_map[shape] {
            0
        } else if pred == class_map[texture] {
            1
        } else {
            2
        };
        for c in [&mut per_class[shape], &mut overall] {
            match slot {
                0 => c.shape += 1,
                1 => c.texture += 1,
                _ => c.other += 1,
            }
        }
    }
    ShapeBiasReport { per_class, overall }
}

pub fn shape_bias<T: Scalar>(
    model: &Network<T>,
    items: &[CueConflictItem<T>],
    class_map: &[usize],
    policy: &AugmentationPolicy,
) -> Result<ShapeBiasReport> {
    for it in items {
        if it.shape_class == it.texture_class {
            return Err(Error::InvalidParams(format!("{} has matching shape and texture", it.image.source_id)));
        }
        if it.shape_class >= class_map.len() || it.texture_class >= class_map.len() {
            return Err(Error::InvalidParams(format!("{} uses a class outside the class map", it.image.source_id)));
        }
    }
    let images: Vec<LabeledImage<T>> = items.iter().map(|i| i.image.clone()).collect();
    let preds = if images.is_empty() { Vec::new() } else { predict(model, &images, policy)? };
    let decisions: Vec<_> = preds.into_iter().zip(items).map(|(p, i)| (p, i.shape_class, i.texture_class)).collect();
    Ok(shape_bias_from_predictions(&decisions, class_map))
}

/// Writes an `[N, D]` activation matrix in the tensor blob format.
pub fn write_activation_dump<T: Scalar>(path: &Path, features: &Tensor<T>) -> Result<()> {
    std::fs::write(path, encode_blob("activations", features)).map_err(|e| Error::io(path, e))
}

pub fn read_activation_dump<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, t) = decode_blob(&bytes).map_err(|d| Error::format(path, d))?;
    if t.shape().len() != 2 {
        return Err(Error::format(path, format!("activation dump must be [N, D], found {:?}", t.shape())));
    }
    Ok(t)
}

#[cfg(test)]
mod tests;
