//! Straightforward reference implementations used to cross-check the library.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchlab_core::autograd::{Tape, Var};
use sketchlab_core::probe::CamModel;
use sketchlab_core::{Result, Tensor};

/// Sort, then interpolate linearly between the neighbouring order statistics.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = (v.len() - 1) as f64 * p / 100.0;
    let i = pos as usize;
    if i + 1 >= v.len() {
        return v[v.len() - 1];
    }
    v[i] + (pos - i as f64) * (v[i + 1] - v[i])
}

/// Regions of `{v > percentile}` by depth-first flood fill.
pub fn flood_fill_regions(values: &[f64], h: usize, w: usize, p: f64, eight: bool) -> usize {
    let t = percentile(values, p);
    let hot: Vec<bool> = values.iter().map(|&v| v > t).collect();
    let mut seen = vec![false; h * w];
    let mut regions = 0;
    for start in 0..h * w {
        if !hot[start] || seen[start] {
            continue;
        }
        regions += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if (dy == 0 && dx == 0) || (!eight && dy != 0 && dx != 0) {
                        continue;
                    }
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if hot[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    regions
}

/// Principal variances (descending) from the SVD of the centred `n x d` data.
pub fn principal_variances(rows: &[Vec<f64>]) -> Vec<f64> {
    let (n, d) = (rows.len(), rows[0].len());
    let mut m = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for j in 0..d {
        let mean = m.column(j).mean();
        m.column_mut(j).add_scalar_mut(-mean);
    }
    let mut s: Vec<f64> = m.svd(false, false).singular_values.iter().map(|v| v * v / (n - 1) as f64).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s.resize(d, 0.0);
    s
}

/// Smallest component count whose variance share reaches `theta`.
pub fn components_for(variances: &[f64], theta: f64) -> usize {
    let total: f64 = variances.iter().sum();
    let mut acc = 0.0;
    for (i, v) in variances.iter().enumerate() {
        acc += v;
        if acc / total >= theta - 1e-9 {
            return i + 1;
        }
    }
    variances.len()
}

/// Central difference `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `|a - b| <= rel * max(|a|, |b|, floor)`.
pub fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(floor)
}

/// conv3x3 -> ReLU (the probed layer) -> conv1x1 -> ReLU -> global average -> linear.
pub struct TwoLayer {
    w1: Tensor<f64>,
    w2: Tensor<f64>,
    b2: Tensor<f64>,
    fc: Tensor<f64>,
    bias: Tensor<f64>,
}

impl TwoLayer {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = |shape: &[usize]| {
            let n: usize = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-0.6..0.6)).collect()).unwrap()
        };
        TwoLayer { w1: t(&[4, 3, 3, 3]), w2: t(&[5, 4, 1, 1]), b2: t(&[5]), fc: t(&[3, 5]), bias: t(&[3]) }
    }

    pub fn head(&self, tape: &mut Tape<f64>, a: Var) -> Var {
        let w2 = tape.constant(self.w2.clone());
        let b2 = tape.constant(self.b2.clone());
        let b = tape.conv2d(a, w2, Some(b2), 1, 0, 1);
        let b = tape.relu(b);
        let pooled = tape.global_avg_pool(b);
        let fc = tape.constant(self.fc.clone());
        let bias = tape.constant(self.bias.clone());
        tape.linear(pooled, fc, bias)
    }
}

impl CamModel<f64> for TwoLayer {
    fn logits_and_layer(&self, tape: &mut Tape<f64>, x: Var, layer: &str) -> Result<(Var, Var)> {
        assert_eq!(layer, "a");
        let w1 = tape.constant(self.w1.clone());
        let a = tape.conv2d(x, w1, None, 1, 1, 1);
        let a = tape.relu(a);
        let logits = self.head(tape, a);
        Ok((logits, a))
    }
}
