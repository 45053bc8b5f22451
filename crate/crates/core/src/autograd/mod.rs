//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Every operation appends a node holding its forward value and whatever it
//! needs for the backward pass. [`Tape::backward`] walks the tape once in
//! reverse. Spatial tensors use the `[C, N, H, W]` layout, dense tensors
//! `[N, F]`, and losses are zero-dimensional.

pub mod kernels;

use crate::scalar::Scalar;
use crate::tensor::Tensor;
use kernels::{col2im, cross_entropy_with_grad, gemm, im2col, log_softmax_rows, softmax_rows, ConvGeom};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom, groups: usize, cols: Option<Vec<T>> },
    ConvTranspose2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom, cin: usize },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, batch_stats: bool },
    Relu { x: Var },
    LeakyRelu { x: Var, slope: T },
    Sigmoid { x: Var },
    Affine { x: Var, scale: T },
    Add { a: Var, b: Var },
    MaxPool { x: Var, argmax: Vec<usize> },
    GlobalAvgPool { x: Var },
    Flatten { x: Var },
    Linear { x: Var, w: Var, b: Var },
    Upsample { x: Var, factor: usize },
    Concat { parts: Vec<Var> },
    /// Scalar loss whose input gradient was computed during the forward pass.
    Loss { x: Var, grad: Vec<T> },
    WeightedSum { terms: Vec<(Var, T)> },
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Batch statistics produced by a training-mode batch norm, for running averages.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub unbiased_var: Vec<T>,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one backward pass, indexed by tape variable.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// A gradient-free copy of `x`.
    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.value(x).clone();
        self.constant(v)
    }

    /// Grouped 2-D convolution. `x`: `[Cin, N, H, W]`, `w`: `[Cout, Cin/groups, k, k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize, groups: usize) -> Var {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(xs.len(), 4, "conv2d input must be [C,N,H,W]");
        let (cin, n, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, cin_g, k) = (ws[0], ws[1], ws[2]);
        assert_eq!(cin_g * groups, cin, "conv2d channel mismatch");
        assert_eq!(cout % groups, 0);
        let geom = ConvGeom::new(cin, n, h, wd, k, stride, pad).expect("conv2d kernel larger than input");
        let m = geom.out_positions();
        let cols = if geom.is_pointwise() { None } else { Some(im2col(self.value(x).data(), &geom)) };
        let colbuf: &[T] = match &cols {
            Some(c) => c,
            None => self.value(x).data(),
        };
        let kg = cin_g * k * k;
        let cout_g = cout / groups;
        let mut out = vec![T::zero(); cout * m];
        let wdata = self.value(w).data();
        for g in 0..groups {
            gemm(
                cout_g,
                kg,
                m,
                &wdata[g * cout_g * kg..(g + 1) * cout_g * kg],
                false,
                &colbuf[g * kg * m..(g + 1) * kg * m],
                false,
                T::zero(),
                &mut out[g * cout_g * m..(g + 1) * cout_g * m],
            );
        }
        if let Some(b) = b {
            let bias = self.value(b).data();
            for (c, chunk) in out.chunks_mut(m).enumerate() {
                let bc = bias[c];
                chunk.iter_mut().for_each(|v| *v += bc);
            }
        }
        let value = Tensor::from_vec(&[cout, n, geom.out_h, geom.out_w], out).expect("conv2d shape");
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(value, Op::Conv2d { x, w, b, geom, groups, cols }, &parents)
    }

    /// Transposed convolution. `x`: `[Cin, N, H, W]`, `w`: `[Cin, Cout, k, k]`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Var {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let (cin, n, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        assert_eq!(ws[0], cin, "conv_transpose2d channel mismatch");
        let (cout, k) = (ws[1], ws[2]);
        let oh = (h - 1) * stride + k + output_pad - 2 * pad;
        let ow = (wd - 1) * stride + k + output_pad - 2 * pad;
        // The adjoint of a convolution over the output grid.
        let geom = ConvGeom {
            channels: cout,
            batch: n,
            height: oh,
            width: ow,
            kernel_h: k,
            kernel_w: k,
            stride,
            pad,
            out_h: h,
            out_w: wd,
        };
        let m_in = n * h * wd;
        let kk = cout * k * k;
        let mut cols = vec![T::zero(); kk * m_in];
        gemm(kk, cin, m_in, self.value(w).data(), true, self.value(x).data(), false, T::zero(), &mut cols);
        let mut out = vec![T::zero(); cout * n * oh * ow];
        col2im(&cols, &geom, &mut out);
        if let Some(b) = b {
            let bias = self.value(b).data();
            for (c, chunk) in out.chunks_mut(n * oh * ow).enumerate() {
                let bc = bias[c];
                chunk.iter_mut().for_each(|v| *v += bc);
            }
        }
        let value = Tensor::from_vec(&[cout, n, oh, ow], out).expect("conv_transpose2d shape");
        let mut parents = vec![x, w];
        parents.extend(b);
        self.push(value, Op::ConvTranspose2d { x, w, b, geom, cin }, &parents)
    }

    /// Batch normalization with statistics from the batch itself.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> (Var, BatchStats<T>) {
        let xv = self.value(x);
        let c = xv.shape()[0];
        let len = xv.numel() / c;
        let lenf = T::from_usize_lossy(len);
        let mut xhat = vec![T::zero(); xv.numel()];
        let mut inv_std = Vec::with_capacity(c);
        let mut stats = BatchStats { mean: Vec::with_capacity(c), unbiased_var: Vec::with_capacity(c) };
        for (ch, plane) in xv.data().chunks(len).enumerate() {
            let mean = plane.iter().copied().sum::<T>() / lenf;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / lenf;
            let istd = T::one() / (var + eps).sqrt();
            for (o, &v) in xhat[ch * len..(ch + 1) * len].iter_mut().zip(plane) {
                *o = (v - mean) * istd;
            }
            inv_std.push(istd);
            stats.mean.push(mean);
            let denom = if len > 1 { T::from_usize_lossy(len - 1) } else { T::one() };
            stats.unbiased_var.push(var * lenf / denom);
        }
        let out = self.bn_affine(&xhat, gamma, beta, xv.shape().to_vec(), len);
        let v = self.push(out, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats: true }, &[x, gamma, beta]);
        (v, stats)
    }

    /// Batch normalization with fixed running statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: T) -> Var {
        let xv = self.value(x);
        let c = xv.shape()[0];
        let len = xv.numel() / c;
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); xv.numel()];
        for (ch, plane) in xv.data().chunks(len).enumerate() {
            for (o, &v) in xhat[ch * len..(ch + 1) * len].iter_mut().zip(plane) {
                *o = (v - mean[ch]) * inv_std[ch];
            }
        }
        let out = self.bn_affine(&xhat, gamma, beta, xv.shape().to_vec(), len);
        self.push(out, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats: false }, &[x, gamma, beta])
    }

    fn bn_affine(&self, xhat: &[T], gamma: Var, beta: Var, shape: Vec<usize>, len: usize) -> Tensor<T> {
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let out: Vec<T> = xhat.iter().enumerate().map(|(i, &v)| g[i / len] * v + b[i / len]).collect();
        Tensor::from_vec(&shape, out).expect("bn shape")
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(out, Op::Relu { x }, &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let out = self.value(x).map(|v| if v > T::zero() { v } else { v * slope });
        self.push(out, Op::LeakyRelu { x, slope }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        self.push(out, Op::Sigmoid { x }, &[x])
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        self.push(out, Op::Affine { x, scale }, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        assert_eq!(out.shape(), self.value(b).shape(), "add shape mismatch");
        out.add_assign(self.value(b));
        self.push(out, Op::Add { a, b }, &[a, b])
    }

    /// Max pooling with implicit negative-infinity padding.
    pub fn max_pool(&mut self, x: Var, kernel: usize, stride: usize, pad: usize) -> Var {
        let xv = self.value(x);
        let s = xv.shape();
        let geom = ConvGeom::new(s[0], s[1], s[2], s[3], kernel, stride, pad).expect("max_pool geometry");
        let (c, n, h, w) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = (geom.out_h, geom.out_w);
        let mut out = Vec::with_capacity(c * n * oh * ow);
        let mut argmax = Vec::with_capacity(c * n * oh * ow);
        let data = xv.data();
        for plane in 0..c * n {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut idx = usize::MAX;
                    for ki in 0..kernel {
                        let iy = (oy * stride + ki) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kj in 0..kernel {
                            let ix = (ox * stride + kj) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let j = base + iy as usize * w + ix as usize;
                            if data[j] > best || idx == usize::MAX {
                                best = data[j];
                                idx = j;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(idx);
                }
            }
        }
        let value = Tensor::from_vec(&[c, n, oh, ow], out).expect("max_pool shape");
        self.push(value, Op::MaxPool { x, argmax }, &[x])
    }

    /// `[C, N, H, W]` to `[N, C]` by spatial averaging.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let s = xv.shape();
        let (c, n, hw) = (s[0], s[1], s[2] * s[3]);
        let inv = T::one() / T::from_usize_lossy(hw);
        let mut out = vec![T::zero(); n * c];
        for (plane, chunk) in xv.data().chunks(hw).enumerate() {
            let (ch, b) = (plane / n, plane % n);
            out[b * c + ch] = chunk.iter().copied().sum::<T>() * inv;
        }
        let value = Tensor::from_vec(&[n, c], out).expect("gap shape");
        self.push(value, Op::GlobalAvgPool { x }, &[x])
    }

    /// `[C, N, H, W]` to `[N, C*H*W]` (channel-major per sample).
    pub fn flatten(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let s = xv.shape();
        let (c, n, hw) = (s[0], s[1], s[2] * s[3]);
        let mut out = vec![T::zero(); xv.numel()];
        for (plane, chunk) in xv.data().chunks(hw).enumerate() {
            let (ch, b) = (plane / n, plane % n);
            let dst = b * c * hw + ch * hw;
            out[dst..dst + hw].copy_from_slice(chunk);
        }
        let value = Tensor::from_vec(&[n, c * hw], out).expect("flatten shape");
        self.push(value, Op::Flatten { x }, &[x])
    }

    /// `x`: `[N, F]`, `w`: `[O, F]`, `b`: `[O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (n, f) = (self.value(x).shape()[0], self.value(x).shape()[1]);
        let o = self.value(w).shape()[0];
        assert_eq!(self.value(w).shape()[1], f, "linear width mismatch");
        let mut out = vec![T::zero(); n * o];
        gemm(n, f, o, self.value(x).data(), false, self.value(w).data(), true, T::zero(), &mut out);
        let bias = self.value(b).data();
        for row in out.chunks_mut(o) {
            for (v, &bb) in row.iter_mut().zip(bias) {
                *v += bb;
            }
        }
        let value = Tensor::from_vec(&[n, o], out).expect("linear shape");
        self.push(value, Op::Linear { x, w, b }, &[x, w, b])
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Var {
        if factor == 1 {
            return x;
        }
        let xv = self.value(x);
        let s = xv.shape();
        let (h, w) = (s[2], s[3]);
        let (oh, ow) = (h * factor, w * factor);
        let mut out = Vec::with_capacity(xv.numel() * factor * factor);
        for plane in xv.data().chunks(h * w) {
            for oy in 0..oh {
                for ox in 0..ow {
                    out.push(plane[(oy / factor) * w + ox / factor]);
                }
            }
        }
        let value = Tensor::from_vec(&[s[0], s[1], oh, ow], out).expect("upsample shape");
        self.push(value, Op::Upsample { x, factor }, &[x])
    }

    /// Concatenation along the leading (channel) axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let first = self.value(parts[0]).shape().to_vec();
        let mut channels = 0;
        let mut out = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert_eq!(&v.shape()[1..], &first[1..], "concat trailing shape mismatch");
            channels += v.shape()[0];
            out.extend_from_slice(v.data());
        }
        let mut shape = first;
        shape[0] = channels;
        let value = Tensor::from_vec(&shape, out).expect("concat shape");
        self.push(value, Op::Concat { parts: parts.to_vec() }, parts)
    }

    fn loss(&mut self, x: Var, value: T, grad: Vec<T>) -> Var {
        self.push(Tensor::scalar(value), Op::Loss { x, grad }, &[x])
    }

    /// Mean cross-entropy of `[N, K]` logits.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let k = self.value(logits).shape()[1];
        let (loss, grad) = cross_entropy_with_grad(self.value(logits).data(), k, labels);
        self.loss(logits, loss, grad)
    }

    /// Soft-target distillation loss
    /// `alpha * T^2 * KL(softmax(t/T) || softmax(s/T)) + (1 - alpha) * CE(s, y)`,
    /// with the KL term averaged over the batch.
    pub fn distillation_loss(
        &mut self,
        student: Var,
        teacher: &Tensor<T>,
        labels: &[usize],
        temperature: T,
        alpha: T,
    ) -> Var {
        let sv = self.value(student);
        let k = sv.shape()[1];
        let n = sv.shape()[0];
        let (ce, ce_grad) = cross_entropy_with_grad(sv.data(), k, labels);
        let log_ps = log_softmax_rows(sv.data(), k, temperature);
        let log_pt = log_softmax_rows(teacher.data(), k, temperature);
        let inv_n = T::one() / T::from_usize_lossy(n);
        let mut kl = T::zero();
        for (&lt, &ls) in log_pt.iter().zip(&log_ps) {
            kl += lt.exp() * (lt - ls);
        }
        kl *= inv_n;
        let t2 = temperature * temperature;
        let value = alpha * t2 * kl + (T::one() - alpha) * ce;
        let soft_scale = alpha * temperature * inv_n;
        let hard_scale = T::one() - alpha;
        let grad = ce_grad
            .iter()
            .zip(log_ps.iter().zip(&log_pt))
            .map(|(&g, (&ls, &lt))| hard_scale * g + soft_scale * (ls.exp() - lt.exp()))
            .collect();
        self.loss(student, value, grad)
    }

    /// Mean squared difference to a constant target.
    pub fn mse(&mut self, x: Var, target: &Tensor<T>) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.numel(), target.numel(), "mse size mismatch");
        let inv = T::one() / T::from_usize_lossy(xv.numel());
        let two = T::lit(2.0);
        let mut loss = T::zero();
        let grad = xv
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| {
                let d = a - b;
                loss += d * d;
                two * d * inv
            })
            .collect();
        self.loss(x, loss * inv, grad)
    }

    /// Mean absolute difference to a constant target.
    pub fn l1(&mut self, x: Var, target: &Tensor<T>) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.numel(), target.numel(), "l1 size mismatch");
        let inv = T::one() / T::from_usize_lossy(xv.numel());
        let mut loss = T::zero();
        let grad = xv
            .data()
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| {
                let d = a - b;
                loss += d.abs();
                if d > T::zero() {
                    inv
                } else if d < T::zero() {
                    -inv
                } else {
                    T::zero()
                }
            })
            .collect();
        self.loss(x, loss * inv, grad)
    }

    /// Mean over rows of `1 - cos(x_n, target_n)` for `[N, D]` inputs.
    pub fn cosine_distance(&mut self, x: Var, target: &Tensor<T>) -> Var {
        let xv = self.value(x);
        let d = xv.shape()[1];
        let n = xv.shape()[0];
        let eps = T::lit(1e-8);
        let inv_n = T::one() / T::from_usize_lossy(n);
        let mut loss = T::zero();
        let mut grad = vec![T::zero(); xv.numel()];
        for ((row, trow), grow) in xv.data().chunks(d).zip(target.data().chunks(d)).zip(grad.chunks_mut(d)) {
            let xn = row.iter().map(|&v| v * v).sum::<T>().sqrt().max(eps);
            let tn = trow.iter().map(|&v| v * v).sum::<T>().sqrt().max(eps);
            let dot = row.iter().zip(trow).map(|(&a, &b)| a * b).sum::<T>();
            let cos = dot / (xn * tn);
            loss += T::one() - cos;
            for ((g, &a), &b) in grow.iter_mut().zip(row).zip(trow) {
                *g = -(b / (xn * tn) - cos * a / (xn * xn)) * inv_n;
            }
        }
        self.loss(x, loss * inv_n, grad)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let inv = T::one() / T::from_usize_lossy(xv.numel());
        let value = xv.data().iter().copied().sum::<T>() * inv;
        let grad = vec![inv; xv.numel()];
        self.loss(x, value, grad)
    }

    /// Sum over the batch of one logit column of an `[N, K]` matrix.
    /// `sum(mask * x)` for a constant mask of the same shape.
    pub fn masked_sum(&mut self, x: Var, mask: &Tensor<T>) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.shape(), mask.shape(), "mask shape");
        let value = xv.data().iter().zip(mask.data()).fold(T::zero(), |acc, (&a, &m)| acc + a * m);
        self.loss(x, value, mask.data().to_vec())
    }

    pub fn select_sum(&mut self, logits: Var, class: usize) -> Var {
        let lv = self.value(logits);
        let k = lv.shape()[1];
        let mut grad = vec![T::zero(); lv.numel()];
        let mut value = T::zero();
        for (r, row) in lv.data().chunks(k).enumerate() {
            value += row[class];
            grad[r * k + class] = T::one();
        }
        self.loss(logits, value, grad)
    }

    /// `sum_i weight_i * x_i` over zero-dimensional inputs.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Var {
        let value = terms.iter().map(|&(v, w)| w * self.value(v).item()).sum::<T>();
        let parents: Vec<Var> = terms.iter().map(|t| t.0).collect();
        self.push(Tensor::scalar(value), Op::WeightedSum { terms: terms.to_vec() }, &parents)
    }

    /// Backpropagates from a zero-dimensional `root`.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        let rv = &self.nodes[root.0].value;
        grads[root.0] = Some(Tensor::full(rv.shape(), T::one()));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let acc = |grads: &mut [Option<Tensor<T>>], v: Var, t: Tensor<T>| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom, groups, cols } => {
                let gd = g.data();
                let m = geom.out_positions();
                let wv = self.value(*w);
                let cout = wv.shape()[0];
                let cout_g = cout / groups;
                let kg = geom.patch_len() / groups;
                if let Some(b) = b {
                    if self.needs(*b) {
                        let db: Vec<T> = gd.chunks(m).map(|c| c.iter().copied().sum()).collect();
                        acc(grads, *b, Tensor::from_vec(&[cout], db).unwrap());
                    }
                }
                let colbuf: &[T] = match cols {
                    Some(c) => c,
                    None => self.value(*x).data(),
                };
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); wv.numel()];
                    for gi in 0..*groups {
                        gemm(
                            cout_g,
                            m,
                            kg,
                            &gd[gi * cout_g * m..(gi + 1) * cout_g * m],
                            false,
                            &colbuf[gi * kg * m..(gi + 1) * kg * m],
                            true,
                            T::zero(),
                            &mut dw[gi * cout_g * kg..(gi + 1) * cout_g * kg],
                        );
                    }
                    acc(grads, *w, Tensor::from_vec(wv.shape(), dw).unwrap());
                }
                if self.needs(*x) {
                    let mut dcols = vec![T::zero(); geom.patch_len() * m];
                    for gi in 0..*groups {
                        gemm(
                            kg,
                            cout_g,
                            m,
                            &wv.data()[gi * cout_g * kg..(gi + 1) * cout_g * kg],
                            true,
                            &gd[gi * cout_g * m..(gi + 1) * cout_g * m],
                            false,
                            T::zero(),
                            &mut dcols[gi * kg * m..(gi + 1) * kg * m],
                        );
                    }
                    let xs = self.value(*x).shape();
                    let dx = if geom.is_pointwise() {
                        dcols
                    } else {
                        let mut dx = vec![T::zero(); xs.iter().product()];
                        col2im(&dcols, geom, &mut dx);
                        dx
                    };
                    acc(grads, *x, Tensor::from_vec(xs, dx).unwrap());
                }
            }
            Op::ConvTranspose2d { x, w, b, geom, cin } => {
                let gd = g.data();
                let cout = geom.channels;
                let plane = geom.batch * geom.height * geom.width;
                if let Some(b) = b {
                    if self.needs(*b) {
                        let db: Vec<T> = gd.chunks(plane).map(|c| c.iter().copied().sum()).collect();
                        acc(grads, *b, Tensor::from_vec(&[cout], db).unwrap());
                    }
                }
                let dcols = im2col(gd, geom);
                let m_in = geom.out_positions();
                let kk = geom.patch_len();
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); cin * kk];
                    gemm(*cin, m_in, kk, self.value(*x).data(), false, &dcols, true, T::zero(), &mut dw);
                    acc(grads, *w, Tensor::from_vec(self.value(*w).shape(), dw).unwrap());
                }
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); cin * m_in];
                    gemm(*cin, kk, m_in, self.value(*w).data(), false, &dcols, false, T::zero(), &mut dx);
                    acc(grads, *x, Tensor::from_vec(self.value(*x).shape(), dx).unwrap());
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats } => {
                let gd = g.data();
                let c = inv_std.len();
                let len = gd.len() / c;
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for ch in 0..c {
                    let r = ch * len..(ch + 1) * len;
                    dbeta[ch] = gd[r.clone()].iter().copied().sum();
                    dgamma[ch] = gd[r.clone()].iter().zip(&xhat[r]).map(|(&a, &b)| a * b).sum();
                }
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); gd.len()];
                    let lenf = T::from_usize_lossy(len);
                    for ch in 0..c {
                        let r = ch * len..(ch + 1) * len;
                        let scale = gam[ch] * inv_std[ch];
                        if *batch_stats {
                            let mean_g = dbeta[ch] / lenf;
                            let mean_gx = dgamma[ch] / lenf;
                            for ((o, &gv), &xh) in dx[r.clone()].iter_mut().zip(&gd[r.clone()]).zip(&xhat[r]) {
                                *o = scale * (gv - mean_g - xh * mean_gx);
                            }
                        } else {
                            for (o, &gv) in dx[r.clone()].iter_mut().zip(&gd[r]) {
                                *o = scale * gv;
                            }
                        }
                    }
                    acc(grads, *x, Tensor::from_vec(g.shape(), dx).unwrap());
                }
                if self.needs(*gamma) {
                    acc(grads, *gamma, Tensor::from_vec(&[c], dgamma).unwrap());
                }
                if self.needs(*beta) {
                    acc(grads, *beta, Tensor::from_vec(&[c], dbeta).unwrap());
                }
            }
            Op::Relu { x } => {
                let y = &node.value;
                let dx = g.data().iter().zip(y.data()).map(|(&gv, &yv)| if yv > T::zero() { gv } else { T::zero() });
                acc(grads, *x, Tensor::from_vec(g.shape(), dx.collect()).unwrap());
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                let dx = g.data().iter().zip(xv.data()).map(|(&gv, &v)| if v > T::zero() { gv } else { gv * *slope });
                acc(grads, *x, Tensor::from_vec(g.shape(), dx.collect()).unwrap());
            }
            Op::Sigmoid { x } => {
                let y = &node.value;
                let dx = g.data().iter().zip(y.data()).map(|(&gv, &yv)| gv * yv * (T::one() - yv));
                acc(grads, *x, Tensor::from_vec(g.shape(), dx.collect()).unwrap());
            }
            Op::Affine { x, scale } => {
                acc(grads, *x, g.map(|v| v * *scale));
            }
            Op::Add { a, b } => {
                if self.needs(*a) {
                    acc(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    acc(grads, *b, g.clone());
                }
            }
            Op::MaxPool { x, argmax } => {
                let xs = self.value(*x).shape();
                let mut dx = vec![T::zero(); xs.iter().product()];
                for (&idx, &gv) in argmax.iter().zip(g.data()) {
                    dx[idx] += gv;
                }
                acc(grads, *x, Tensor::from_vec(xs, dx).unwrap());
            }
            Op::GlobalAvgPool { x } => {
                let xs = self.value(*x).shape();
                let (c, n, hw) = (xs[0], xs[1], xs[2] * xs[3]);
                let inv = T::one() / T::from_usize_lossy(hw);
                let mut dx = vec![T::zero(); c * n * hw];
                for (plane, chunk) in dx.chunks_mut(hw).enumerate() {
                    let (ch, b) = (plane / n, plane % n);
                    let v = g.data()[b * c + ch] * inv;
                    chunk.iter_mut().for_each(|o| *o = v);
                }
                acc(grads, *x, Tensor::from_vec(xs, dx).unwrap());
            }
            Op::Flatten { x } => {
                let xs = self.value(*x).shape();
                let (c, n, hw) = (xs[0], xs[1], xs[2] * xs[3]);
                let mut dx = vec![T::zero(); c * n * hw];
                for (plane, chunk) in dx.chunks_mut(hw).enumerate() {
                    let (ch, b) = (plane / n, plane % n);
                    let src = b * c * hw + ch * hw;
                    chunk.copy_from_slice(&g.data()[src..src + hw]);
                }
                acc(grads, *x, Tensor::from_vec(xs, dx).unwrap());
            }
            Op::Linear { x, w, b } => {
                let (n, f) = (self.value(*x).shape()[0], self.value(*x).shape()[1]);
                let o = self.value(*w).shape()[0];
                let gd = g.data();
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); n * f];
                    gemm(n, o, f, gd, false, self.value(*w).data(), false, T::zero(), &mut dx);
                    acc(grads, *x, Tensor::from_vec(&[n, f], dx).unwrap());
                }
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); o * f];
                    gemm(o, n, f, gd, true, self.value(*x).data(), false, T::zero(), &mut dw);
                    acc(grads, *w, Tensor::from_vec(&[o, f], dw).unwrap());
                }
                if self.needs(*b) {
                    let mut db = vec![T::zero(); o];
                    for row in gd.chunks(o) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    acc(grads, *b, Tensor::from_vec(&[o], db).unwrap());
                }
            }
            Op::Upsample { x, factor } => {
                let xs = self.value(*x).shape();
                let (h, w) = (xs[2], xs[3]);
                let (oh, ow) = (h * factor, w * factor);
                let mut dx = vec![T::zero(); xs.iter().product()];
                for (plane, gchunk) in g.data().chunks(oh * ow).enumerate() {
                    let base = plane * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            dx[base + (oy / factor) * w + ox / factor] += gchunk[oy * ow + ox];
                        }
                    }
                }
                acc(grads, *x, Tensor::from_vec(xs, dx).unwrap());
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let v = self.value(p);
                    let n = v.numel();
                    if self.needs(p) {
                        let part = g.data()[offset..offset + n].to_vec();
                        acc(grads, p, Tensor::from_vec(v.shape(), part).unwrap());
                    }
                    offset += n;
                }
            }
            Op::Loss { x, grad } => {
                let s = g.item();
                let dx: Vec<T> = grad.iter().map(|&v| v * s).collect();
                acc(grads, *x, Tensor::from_vec(self.value(*x).shape(), dx).unwrap());
            }
            Op::WeightedSum { terms } => {
                let s = g.item();
                for &(v, w) in terms {
                    if self.needs(v) {
                        acc(grads, v, Tensor::scalar(s * w));
                    }
                }
            }
        }
    }
}

/// Row-wise probabilities of a `[N, K]` tensor at the given temperature.
pub fn softmax<T: Scalar>(logits: &Tensor<T>, temperature: T) -> Tensor<T> {
    let k = logits.shape()[1];
    Tensor::from_vec(logits.shape(), softmax_rows(logits.data(), k, temperature)).expect("softmax shape")
}

#[cfg(test)]
mod tests;
