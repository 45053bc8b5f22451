//! Raw numeric kernels behind the tape operations.

use ndarray::linalg::general_mat_mul;
use ndarray::ArrayView2;
use ndarray::ArrayViewMut2;

use crate::scalar::Scalar;

/// Geometry of a 2-D convolution over a `[C, N, H, W]` input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(
        channels: usize,
        batch: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        let span_h = height + 2 * pad;
        let span_w = width + 2 * pad;
        if stride == 0 || span_h < kernel || span_w < kernel {
            return None;
        }
        Some(ConvGeom {
            channels,
            batch,
            height,
            width,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            pad,
            out_h: (span_h - kernel) / stride + 1,
            out_w: (span_w - kernel) / stride + 1,
        })
    }

    pub fn out_positions(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    /// 1x1, stride 1, no padding: the column matrix is the input itself.
    pub fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Unfolds a `[C, N, H, W]` input into a `[C*kh*kw, N*oh*ow]` column matrix.
pub fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let m = g.out_positions();
    let mut cols = vec![T::zero(); g.patch_len() * m];
    let pad = g.pad as isize;
    for c in 0..g.channels {
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = ((c * g.kernel_h + ki) * g.kernel_w + kj) * m;
                for n in 0..g.batch {
                    let plane = (c * g.batch + n) * g.height * g.width;
                    for oy in 0..g.out_h {
                        let iy = (oy * g.stride + ki) as isize - pad;
                        if iy < 0 || iy >= g.height as isize {
                            continue;
                        }
                        let src = plane + iy as usize * g.width;
                        let dst = row + (n * g.out_h + oy) * g.out_w;
                        for ox in 0..g.out_w {
                            let ix = (ox * g.stride + kj) as isize - pad;
                            if ix >= 0 && ix < g.width as isize {
                                cols[dst + ox] = x[src + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Folds a column matrix back onto a `[C, N, H, W]` buffer, accumulating overlaps.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, out: &mut [T]) {
    let m = g.out_positions();
    let pad = g.pad as isize;
    for c in 0..g.channels {
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = ((c * g.kernel_h + ki) * g.kernel_w + kj) * m;
                for n in 0..g.batch {
                    let plane = (c * g.batch + n) * g.height * g.width;
                    for oy in 0..g.out_h {
                        let iy = (oy * g.stride + ki) as isize - pad;
                        if iy < 0 || iy >= g.height as isize {
                            continue;
                        }
                        let dst = plane + iy as usize * g.width;
                        let src = row + (n * g.out_h + oy) * g.out_w;
                        for ox in 0..g.out_w {
                            let ix = (ox * g.stride + kj) as isize - pad;
                            if ix >= 0 && ix < g.width as isize {
                                out[dst + ix as usize] += cols[src + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `c = beta * c + op(a) * op(b)` where `op(a)` is `[m, k]` and `op(b)` is `[k, n]`.
///
/// A transposed operand is stored row-major in its transposed shape.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_trans: bool,
    b: &[T],
    b_trans: bool,
    beta: T,
    c: &mut [T],
) {
    let av = if a_trans {
        ArrayView2::from_shape((k, m), a).expect("gemm lhs").reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).expect("gemm lhs")
    };
    let bv = if b_trans {
        ArrayView2::from_shape((n, k), b).expect("gemm rhs").reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).expect("gemm rhs")
    };
    let mut cv = ArrayViewMut2::from_shape((m, n), c).expect("gemm out");
    general_mat_mul(T::one(), &av, &bv, beta, &mut cv);
}

/// Row-wise softmax of `logits / temperature` for a `[rows, k]` matrix.
pub fn softmax_rows<T: Scalar>(logits: &[T], k: usize, temperature: T) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(k) {
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b / temperature));
        let start = out.len();
        let mut sum = T::zero();
        for &v in row {
            let e = (v / temperature - max).exp();
            sum += e;
            out.push(e);
        }
        for e in &mut out[start..] {
            *e /= sum;
        }
    }
    out
}

/// Row-wise log-softmax of `logits / temperature`.
pub fn log_softmax_rows<T: Scalar>(logits: &[T], k: usize, temperature: T) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(k) {
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b / temperature));
        let lse = row.iter().map(|&v| (v / temperature - max).exp()).sum::<T>().ln() + max;
        out.extend(row.iter().map(|&v| v / temperature - lse));
    }
    out
}

/// Mean cross-entropy of a `[rows, k]` logit matrix and its gradient.
pub fn cross_entropy_with_grad<T: Scalar>(logits: &[T], k: usize, labels: &[usize]) -> (T, Vec<T>) {
    let rows = labels.len();
    let logp = log_softmax_rows(logits, k, T::one());
    let inv = T::one() / T::from_usize_lossy(rows);
    let mut loss = T::zero();
    let mut grad: Vec<T> = logp.iter().map(|&lp| lp.exp() * inv).collect();
    for (r, &y) in labels.iter().enumerate() {
        loss -= logp[r * k + y];
        grad[r * k + y] -= inv;
    }
    (loss * inv, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for any x, y.
        let g = ConvGeom::new(2, 2, 5, 4, 3, 2, 1).unwrap();
        let x: Vec<f64> = (0..2 * 2 * 5 * 4).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..g.patch_len() * g.out_positions()).map(|i| (i as f64 * 0.11).cos()).collect();
        let cols = im2col(&x, &g);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&y, &g, &mut back);
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn gemm_transposes() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // [2,3]
        let b = [1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0]; // [3,2]
        let mut c = [0.0; 4];
        gemm(2, 3, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // a^T stored as [3,2] (columns of a) gives the same product.
        let at = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut c2 = [0.0; 4];
        gemm(2, 3, 2, &at, true, &b, false, 0.0, &mut c2);
        assert_eq!(c, c2);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax_rows(&[1.0f64, 2.0, 3.0, 0.0, 0.0, 0.0], 3, 2.0);
        assert!((p[..3].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[3] - 1.0 / 3.0).abs() < 1e-12);
    }
}
