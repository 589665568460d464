//! Forward and backward kernels for the layer primitives. All image tensors
//! are NHWC row-major; convolution kernels are `(kh, kw, cin, cout)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

/// Resolved spatial geometry of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub out_c: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, padding: Padding) -> Result<Self> {
        if input.len() != 4 {
            return Err(Error::Shape(format!("conv input must be NHWC, got {input:?}")));
        }
        if kernel.len() != 4 {
            return Err(Error::Shape(format!("conv kernel must be (kh,kw,cin,cout), got {kernel:?}")));
        }
        if stride == 0 {
            return Err(Error::Shape("conv stride must be positive".into()));
        }
        let (batch, in_h, in_w, in_c) = (input[0], input[1], input[2], input[3]);
        let (k_h, k_w, k_c, out_c) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if k_c != in_c {
            return Err(Error::Shape(format!("kernel expects {k_c} input channels, input has {in_c}")));
        }
        let (out_h, pad_top) = out_dim(in_h, k_h, stride, padding)?;
        let (out_w, pad_left) = out_dim(in_w, k_w, stride, padding)?;
        Ok(Self { batch, in_h, in_w, in_c, k_h, k_w, out_c, stride, out_h, out_w, pad_top, pad_left })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_h, self.out_w, self.out_c]
    }

    fn patch_len(&self) -> usize {
        self.k_h * self.k_w * self.in_c
    }

    fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Multiply-accumulates of one forward pass.
    pub fn macs(&self) -> u64 {
        (self.batch * self.out_pixels() * self.patch_len() * self.out_c) as u64
    }
}

fn out_dim(size: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if k > size {
                return Err(Error::Shape(format!("kernel extent {k} exceeds input extent {size}")));
            }
            Ok(((size - k) / stride + 1, 0))
        }
        Padding::Same => {
            let out = size.div_ceil(stride);
            let needed = ((out - 1) * stride + k).saturating_sub(size);
            if k > size + needed {
                return Err(Error::Shape(format!("kernel extent {k} exceeds padded extent")));
            }
            Ok((out, needed / 2))
        }
    }
}

/// Gathers the receptive fields of one sample into `cols` (out_pixels × patch_len).
fn im2col<T: Real>(g: &ConvGeometry, sample: &[T], cols: &mut [T]) {
    let plen = g.patch_len();
    let row_len = g.k_w * g.in_c;
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let dst = &mut cols[(oy * g.out_w + ox) * plen..][..plen];
            let base_y = (oy * g.stride) as isize - g.pad_top as isize;
            let base_x = (ox * g.stride) as isize - g.pad_left as isize;
            for ky in 0..g.k_h {
                let y = base_y + ky as isize;
                let row = &mut dst[ky * row_len..][..row_len];
                if y < 0 || y >= g.in_h as isize {
                    row.fill(T::zero());
                    continue;
                }
                let y = y as usize;
                // Fast path: the whole kernel row lies inside the image.
                if base_x >= 0 && base_x as usize + g.k_w <= g.in_w {
                    let start = (y * g.in_w + base_x as usize) * g.in_c;
                    row.copy_from_slice(&sample[start..start + row_len]);
                    continue;
                }
                for kx in 0..g.k_w {
                    let x = base_x + kx as isize;
                    let cell = &mut row[kx * g.in_c..][..g.in_c];
                    if x < 0 || x >= g.in_w as isize {
                        cell.fill(T::zero());
                    } else {
                        let start = (y * g.in_w + x as usize) * g.in_c;
                        cell.copy_from_slice(&sample[start..start + g.in_c]);
                    }
                }
            }
        }
    }
}

/// Scatter-adds `cols` back into the sample gradient.
fn col2im<T: Real>(g: &ConvGeometry, cols: &[T], sample: &mut [T]) {
    let plen = g.patch_len();
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let src = &cols[(oy * g.out_w + ox) * plen..][..plen];
            let base_y = (oy * g.stride) as isize - g.pad_top as isize;
            let base_x = (ox * g.stride) as isize - g.pad_left as isize;
            for ky in 0..g.k_h {
                let y = base_y + ky as isize;
                if y < 0 || y >= g.in_h as isize {
                    continue;
                }
                for kx in 0..g.k_w {
                    let x = base_x + kx as isize;
                    if x < 0 || x >= g.in_w as isize {
                        continue;
                    }
                    let start = (y as usize * g.in_w + x as usize) * g.in_c;
                    let cell = &src[(ky * g.k_w + kx) * g.in_c..][..g.in_c];
                    for (d, &s) in sample[start..start + g.in_c].iter_mut().zip(cell) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Cross-correlation without bias.
pub fn conv2d<T: Real>(input: &Tensor<T>, kernel: &Tensor<T>, stride: usize, padding: Padding) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input.shape(), kernel.shape(), stride, padding)?;
    let (m, k, n) = (g.out_pixels(), g.patch_len(), g.out_c);
    let in_len = g.in_h * g.in_w * g.in_c;
    let mut out = vec![T::zero(); g.batch * m * n];
    let mut cols = vec![T::zero(); m * k];
    for b in 0..g.batch {
        let sample = &input.data()[b * in_len..][..in_len];
        im2col(&g, sample, &mut cols);
        T::gemm(
            m, k, n, T::one(), &cols, k as isize, 1, kernel.data(), n as isize, 1, T::zero(),
            &mut out[b * m * n..][..m * n], n as isize, 1,
        );
    }
    Tensor::new(g.output_shape(), out)
}

/// Returns `(d_input, d_kernel)`; `d_input` only when requested.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: Padding,
    upstream: &Tensor<T>,
    want_input: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>)> {
    let g = ConvGeometry::new(input.shape(), kernel.shape(), stride, padding)?;
    let (m, k, n) = (g.out_pixels(), g.patch_len(), g.out_c);
    let in_len = g.in_h * g.in_w * g.in_c;
    let mut d_kernel = vec![T::zero(); k * n];
    let mut d_input = want_input.then(|| vec![T::zero(); input.len()]);
    let mut cols = vec![T::zero(); m * k];
    let mut d_cols = if want_input { vec![T::zero(); m * k] } else { Vec::new() };
    for b in 0..g.batch {
        let sample = &input.data()[b * in_len..][..in_len];
        let dy = &upstream.data()[b * m * n..][..m * n];
        im2col(&g, sample, &mut cols);
        // dK += colsᵀ · dY
        T::gemm(k, m, n, T::one(), &cols, 1, k as isize, dy, n as isize, 1, T::one(), &mut d_kernel, n as isize, 1);
        if let Some(dx) = d_input.as_mut() {
            // dCols = dY · Kᵀ
            T::gemm(m, n, k, T::one(), dy, n as isize, 1, kernel.data(), 1, n as isize, T::zero(), &mut d_cols, k as isize, 1);
            col2im(&g, &d_cols, &mut dx[b * in_len..][..in_len]);
        }
    }
    let d_input = match d_input {
        Some(d) => Some(Tensor::new(input.shape().to_vec(), d)?),
        None => None,
    };
    Ok((d_input, Tensor::new(kernel.shape().to_vec(), d_kernel)?))
}

/// Per-channel batch statistics cached by the training-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub inv_std: Vec<T>,
}

fn channels_of<T: Real>(x: &Tensor<T>) -> Result<usize> {
    x.shape().last().copied().filter(|&c| c > 0).ok_or_else(|| Error::Shape("tensor has no channel axis".into()))
}

/// Normalizes over every axis but the last with batch statistics.
pub fn batch_norm_train<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> Result<(Tensor<T>, BatchStats<T>)> {
    let c = channels_of(x)?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape(format!("batch norm over {c} channels given {} scales", gamma.len())));
    }
    let rows = x.len() / c;
    // Statistics accumulate in f64 regardless of the element type.
    let count = rows as f64;
    let mut sum = vec![0.0f64; c];
    for row in x.data().chunks_exact(c) {
        for (m, &v) in sum.iter_mut().zip(row) {
            *m += v.as_f64();
        }
    }
    let mean64: Vec<f64> = sum.iter().map(|s| s / count).collect();
    let mut sq = vec![0.0f64; c];
    for row in x.data().chunks_exact(c) {
        for ((s, &v), &m) in sq.iter_mut().zip(row).zip(&mean64) {
            let d = v.as_f64() - m;
            *s += d * d;
        }
    }
    let mean: Vec<T> = mean64.iter().map(|&m| T::of(m)).collect();
    let var: Vec<T> = sq.iter().map(|&s| T::of(s / count)).collect();
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(c) {
        for ch in 0..c {
            out.push(gamma[ch] * (row[ch] - mean[ch]) * inv_std[ch] + beta[ch]);
        }
    }
    Ok((Tensor::new(x.shape().to_vec(), out)?, BatchStats { mean, var, inv_std }))
}

/// Returns `(d_x, d_gamma, d_beta)` for the training-mode forward.
pub fn batch_norm_train_backward<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    stats: &BatchStats<T>,
    upstream: &Tensor<T>,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let c = gamma.len();
    let rows = x.len() / c;
    let count = T::of(rows as f64);
    let mut d_gamma = vec![T::zero(); c];
    let mut d_beta = vec![T::zero(); c];
    for (row, dy) in x.data().chunks_exact(c).zip(upstream.data().chunks_exact(c)) {
        for ch in 0..c {
            let xhat = (row[ch] - stats.mean[ch]) * stats.inv_std[ch];
            d_gamma[ch] += dy[ch] * xhat;
            d_beta[ch] += dy[ch];
        }
    }
    let mut dx = Vec::with_capacity(x.len());
    for (row, dy) in x.data().chunks_exact(c).zip(upstream.data().chunks_exact(c)) {
        for ch in 0..c {
            let xhat = (row[ch] - stats.mean[ch]) * stats.inv_std[ch];
            // dx = γ·inv_std/M · (M·dy − Σdy − x̂·Σ(dy·x̂))
            let v = gamma[ch] * stats.inv_std[ch] / count
                * (count * dy[ch] - d_beta[ch] - xhat * d_gamma[ch]);
            dx.push(v);
        }
    }
    (Tensor::new(x.shape().to_vec(), dx).expect("same shape"), d_gamma, d_beta)
}

/// Normalizes with fixed running statistics.
pub fn batch_norm_infer<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> Result<Tensor<T>> {
    let c = channels_of(x)?;
    if gamma.len() != c || beta.len() != c || mean.len() != c || var.len() != c {
        return Err(Error::Shape(format!("batch norm over {c} channels given {} scales", gamma.len())));
    }
    let scale: Vec<T> = (0..c).map(|ch| gamma[ch] / (var[ch] + eps).sqrt()).collect();
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(c) {
        for ch in 0..c {
            out.push((row[ch] - mean[ch]) * scale[ch] + beta[ch]);
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub fn batch_norm_infer_backward<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
    upstream: &Tensor<T>,
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let c = gamma.len();
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut d_gamma = vec![T::zero(); c];
    let mut d_beta = vec![T::zero(); c];
    let mut dx = Vec::with_capacity(x.len());
    for (row, dy) in x.data().chunks_exact(c).zip(upstream.data().chunks_exact(c)) {
        for ch in 0..c {
            d_gamma[ch] += dy[ch] * (row[ch] - mean[ch]) * inv_std[ch];
            d_beta[ch] += dy[ch];
            dx.push(dy[ch] * gamma[ch] * inv_std[ch]);
        }
    }
    (Tensor::new(x.shape().to_vec(), dx).expect("same shape"), d_gamma, d_beta)
}

pub fn elu<T: Real>(x: &Tensor<T>, a: f64) -> Tensor<T> {
    let a = T::of(a);
    x.map(|v| if v > T::zero() { v } else { a * v.exp_m1() })
}

pub fn elu_backward<T: Real>(x: &Tensor<T>, a: f64, upstream: &Tensor<T>) -> Tensor<T> {
    let a = T::of(a);
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { g * a * v.exp() })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

fn nhwc(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [n, h, w, c] => Ok((n, h, w, c)),
        _ => Err(Error::Shape(format!("expected NHWC tensor, got {shape:?}"))),
    }
}

pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, h, w, c) = nhwc(x.shape())?;
    if h * w == 0 {
        return Err(Error::Shape("global pooling over an empty spatial extent".into()));
    }
    let denom = T::of((h * w) as f64);
    let mut out = vec![T::zero(); n * c];
    for b in 0..n {
        let acc = &mut out[b * c..][..c];
        for px in x.data()[b * h * w * c..][..h * w * c].chunks_exact(c) {
            for (a, &v) in acc.iter_mut().zip(px) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= denom);
    }
    Tensor::new([n, c], out)
}

pub fn global_avg_pool_backward<T: Real>(input_shape: &[usize], upstream: &Tensor<T>) -> Tensor<T> {
    let (n, h, w, c) = nhwc(input_shape).expect("validated in forward");
    let denom = T::of((h * w) as f64);
    let mut dx = Vec::with_capacity(n * h * w * c);
    for b in 0..n {
        let g = &upstream.data()[b * c..][..c];
        for _ in 0..h * w {
            dx.extend(g.iter().map(|&v| v / denom));
        }
    }
    Tensor::new(input_shape.to_vec(), dx).expect("same shape")
}

/// 2×2 average pooling with stride 2. Odd extents get a partial last
/// window averaged over its valid cells.
pub fn avg_pool2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, h, w, c) = nhwc(x.shape())?;
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = vec![T::zero(); n * oh * ow * c];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let dst = &mut out[((b * oh + oy) * ow + ox) * c..][..c];
                let ys = (2 * oy)..(2 * oy + 2).min(h);
                let xs = (2 * ox)..(2 * ox + 2).min(w);
                let cells = T::of((ys.len() * xs.len()) as f64);
                for y in ys {
                    for x_ in xs.clone() {
                        let src = &x.data()[((b * h + y) * w + x_) * c..][..c];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                dst.iter_mut().for_each(|d| *d /= cells);
            }
        }
    }
    Tensor::new([n, oh, ow, c], out)
}

pub fn avg_pool2_backward<T: Real>(input_shape: &[usize], upstream: &Tensor<T>) -> Tensor<T> {
    let (n, h, w, c) = nhwc(input_shape).expect("validated in forward");
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut dx = vec![T::zero(); n * h * w * c];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = &upstream.data()[((b * oh + oy) * ow + ox) * c..][..c];
                let ys = (2 * oy)..(2 * oy + 2).min(h);
                let xs = (2 * ox)..(2 * ox + 2).min(w);
                let cells = T::of((ys.len() * xs.len()) as f64);
                for y in ys {
                    for x_ in xs.clone() {
                        let dst = &mut dx[((b * h + y) * w + x_) * c..][..c];
                        for (d, &s) in dst.iter_mut().zip(g) {
                            *d += s / cells;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx).expect("same shape")
}

/// Appends zero channels up to `channels`.
pub fn pad_channels<T: Real>(x: &Tensor<T>, channels: usize) -> Result<Tensor<T>> {
    let c = channels_of(x)?;
    if channels < c {
        return Err(Error::Shape(format!("cannot pad {c} channels down to {channels}")));
    }
    let mut out = Vec::with_capacity(x.len() / c * channels);
    for row in x.data().chunks_exact(c) {
        out.extend_from_slice(row);
        out.extend(std::iter::repeat_n(T::zero(), channels - c));
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("has channels") = channels;
    Tensor::new(shape, out)
}

pub fn pad_channels_backward<T: Real>(input_shape: &[usize], upstream: &Tensor<T>) -> Tensor<T> {
    let c = *input_shape.last().expect("has channels");
    let padded = *upstream.shape().last().expect("has channels");
    let data = upstream.data().chunks_exact(padded).flat_map(|row| row[..c].iter().copied()).collect();
    Tensor::new(input_shape.to_vec(), data).expect("same shape")
}

/// `x(N×D) · w(D×K) + b`.
pub fn dense<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let (n, d) = match *x.shape() {
        [n, d] => (n, d),
        _ => return Err(Error::Shape(format!("dense input must be N×D, got {:?}", x.shape()))),
    };
    let k = match *w.shape() {
        [wd, k] if wd == d => k,
        _ => return Err(Error::Shape(format!("dense weight {:?} does not accept width {d}", w.shape()))),
    };
    let mut out = vec![T::zero(); n * k];
    if let Some(b) = b {
        if b.len() != k {
            return Err(Error::Shape(format!("dense bias has {} entries for {k} outputs", b.len())));
        }
        for row in out.chunks_exact_mut(k) {
            row.copy_from_slice(b.data());
        }
    }
    T::gemm(n, d, k, T::one(), x.data(), d as isize, 1, w.data(), k as isize, 1, T::one(), &mut out, k as isize, 1);
    Tensor::new([n, k], out)
}

/// Returns `(d_x, d_w, d_b)`.
pub fn dense_backward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, upstream: &Tensor<T>) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (n, d) = (x.shape()[0], x.shape()[1]);
    let k = w.shape()[1];
    let dy = upstream.data();
    let mut dx = vec![T::zero(); n * d];
    T::gemm(n, k, d, T::one(), dy, k as isize, 1, w.data(), 1, k as isize, T::zero(), &mut dx, d as isize, 1);
    let mut dw = vec![T::zero(); d * k];
    T::gemm(d, n, k, T::one(), x.data(), 1, d as isize, dy, k as isize, 1, T::zero(), &mut dw, k as isize, 1);
    let mut db = vec![T::zero(); k];
    for row in dy.chunks_exact(k) {
        for (a, &v) in db.iter_mut().zip(row) {
            *a += v;
        }
    }
    (
        Tensor::new([n, d], dx).expect("shape"),
        Tensor::new([d, k], dw).expect("shape"),
        Tensor::new([k], db).expect("shape"),
    )
}

/// Row-wise softmax over the last axis.
pub fn softmax<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let k = channels_of(x)?;
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(k) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let start = out.len();
        let mut total = T::zero();
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e /= total);
    }
    Tensor::new(x.shape().to_vec(), out)
}

pub fn softmax_backward<T: Real>(probs: &Tensor<T>, upstream: &Tensor<T>) -> Tensor<T> {
    let k = *probs.shape().last().expect("has classes");
    let mut dx = Vec::with_capacity(probs.len());
    for (p, g) in probs.data().chunks_exact(k).zip(upstream.data().chunks_exact(k)) {
        let dot = p.iter().zip(g).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        dx.extend(p.iter().zip(g).map(|(&pi, &gi)| pi * (gi - dot)));
    }
    Tensor::new(probs.shape().to_vec(), dx).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct six-loop cross-correlation.
    fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, stride: usize, padding: Padding) -> Tensor<f64> {
        let g = ConvGeometry::new(x.shape(), k.shape(), stride, padding).unwrap();
        let mut out = vec![0.0; g.batch * g.out_h * g.out_w * g.out_c];
        for b in 0..g.batch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    for co in 0..g.out_c {
                        let mut acc = 0.0;
                        for ky in 0..g.k_h {
                            for kx in 0..g.k_w {
                                let y = (oy * stride + ky) as isize - g.pad_top as isize;
                                let xx = (ox * stride + kx) as isize - g.pad_left as isize;
                                if y < 0 || xx < 0 || y >= g.in_h as isize || xx >= g.in_w as isize {
                                    continue;
                                }
                                for ci in 0..g.in_c {
                                    let xv = x.data()[((b * g.in_h + y as usize) * g.in_w + xx as usize) * g.in_c + ci];
                                    let kv = k.data()[((ky * g.k_w + kx) * g.in_c + ci) * g.out_c + co];
                                    acc += xv * kv;
                                }
                            }
                        }
                        out[((b * g.out_h + oy) * g.out_w + ox) * g.out_c + co] = acc;
                    }
                }
            }
        }
        Tensor::new(g.output_shape(), out).unwrap()
    }

    #[test]
    fn conv_scalar_and_full_overlap() {
        let x = Tensor::<f32>::new([1, 1, 1, 1], vec![5.0]).unwrap();
        let k = Tensor::<f32>::new([1, 1, 1, 1], vec![2.0]).unwrap();
        assert_eq!(conv2d(&x, &k, 1, Padding::Same).unwrap().data(), &[10.0]);
        let x = Tensor::<f32>::ones([1, 3, 3, 1]);
        let k = Tensor::<f32>::ones([3, 3, 1, 1]);
        let y = conv2d(&x, &k, 1, Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(h, stride, padding) in &[
            (5, 1, Padding::Valid),
            (5, 1, Padding::Same),
            (5, 2, Padding::Same),
            (6, 2, Padding::Same),
            (7, 2, Padding::Valid),
        ] {
            let x = random(&[2, h, h, 2], &mut rng);
            let k = random(&[3, 3, 2, 4], &mut rng);
            let fast = conv2d(&x, &k, stride, padding).unwrap();
            let slow = naive_conv(&x, &k, stride, padding);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_padding_keeps_extent_at_stride_one() {
        let g = ConvGeometry::new(&[1, 64, 64, 3], &[3, 3, 3, 32], 1, Padding::Same).unwrap();
        assert_eq!(g.output_shape(), [1, 64, 64, 32]);
        let g = ConvGeometry::new(&[1, 64, 64, 32], &[3, 3, 32, 64], 2, Padding::Same).unwrap();
        assert_eq!(g.output_shape(), [1, 32, 32, 64]);
    }

    #[test]
    fn oversized_kernel_rejected() {
        let x = Tensor::<f32>::ones([1, 2, 2, 1]);
        let k = Tensor::<f32>::ones([3, 3, 1, 1]);
        assert!(conv2d(&x, &k, 1, Padding::Valid).is_err());
        let k = Tensor::<f32>::ones([3, 3, 2, 1]);
        assert!(conv2d(&x, &k, 1, Padding::Same).is_err());
    }

    #[test]
    fn batch_norm_constant_input_is_zero() {
        let x = Tensor::<f32>::full([4, 2, 2, 3], 0.7);
        let (y, _) = batch_norm_train(&x, &[1.0; 3], &[0.0; 3], 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_norm_standardizes_random_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&[8, 3, 3, 4], &mut rng).map(|v| 3.0 * v + 1.5);
        let (y, _) = batch_norm_train(&x, &[1.0; 4], &[0.0; 4], 1e-5).unwrap();
        for ch in 0..4 {
            let vals: Vec<f64> = y.data().iter().skip(ch).step_by(4).copied().collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() <= 1e-4);
            assert!((var - 1.0).abs() <= 1e-4);
        }
    }

    #[test]
    fn elu_values() {
        let x = Tensor::<f64>::from_f64([3], &[0.0, 1.0, -1.0]).unwrap();
        let y = elu(&x, 1.0);
        assert_eq!(y.data()[0], 0.0);
        assert_eq!(y.data()[1], 1.0);
        assert!((y.data()[2] - (-0.63212)).abs() < 1e-5);
    }

    #[test]
    fn pooling_values() {
        let x = Tensor::<f32>::new([1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[2.5]);
        assert_eq!(avg_pool2(&x).unwrap().data(), &[2.5]);
        let ones = Tensor::<f32>::ones([1, 3, 3, 1]);
        assert_eq!(global_avg_pool(&ones).unwrap().data(), &[1.0]);
        // odd extent: partial windows average their valid cells
        assert!(avg_pool2(&ones).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dense_identity_and_softmax() {
        let x = Tensor::<f32>::new([1, 2], vec![3.0, -4.0]).unwrap();
        let w = Tensor::<f32>::new([2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::<f32>::zeros([2]);
        assert_eq!(dense(&x, &w, Some(&b)).unwrap().data(), &[3.0, -4.0]);
        let s = softmax(&Tensor::<f32>::zeros([1, 2])).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let big = softmax(&Tensor::<f32>::new([1, 3], vec![1000.0, 0.0, -1000.0]).unwrap()).unwrap();
        assert!(big.is_finite());
        assert!(big.data().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn pad_channels_appends_zeros() {
        let x = Tensor::<f32>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = pad_channels(&x, 3).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 0.0, 3.0, 4.0, 0.0]);
        assert_eq!(pad_channels_backward(x.shape(), &y).data(), x.data());
    }
}
