//! Layer kernels. Each forward has a matching backward that returns the
//! input gradient and accumulates parameter gradients.

use super::direct;
use super::tensor::Tensor4;

/// `(size + 2·pad − kernel) / stride + 1`, or `None` if the kernel does not
/// fit the padded input.
pub fn conv_out_size(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if padded < kernel || stride == 0 {
        None
    } else {
        Some((padded - kernel) / stride + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn is_same_3x3(&self) -> bool {
        (self.kernel, self.stride, self.pad) == (3, 1, 1)
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            conv_out_size(h, self.kernel, self.stride, self.pad).expect("validated geometry"),
            conv_out_size(w, self.kernel, self.stride, self.pad).expect("validated geometry"),
        )
    }
}

/// Unfold one item `(C, H, W)` into `col[(c·K + ky)·K + kx][oy·OW + ox]`.
fn im2col(x: &[f64], h: usize, w: usize, g: &ConvGeometry, oh: usize, ow: usize, col: &mut [f64]) {
    let k = g.kernel;
    let positions = oh * ow;
    for c in 0..g.in_channels {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((c * k + ky) * k + kx) * positions..][..positions];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= w as isize { 0.0 } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `col` back into `dx`.
fn col2im(col: &[f64], h: usize, w: usize, g: &ConvGeometry, oh: usize, ow: usize, dx: &mut [f64]) {
    let k = g.kernel;
    let positions = oh * ow;
    for c in 0..g.in_channels {
        let plane = &mut dx[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((c * k + ky) * k + kx) * positions..][..positions];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &v) in row[oy * ow..(oy + 1) * ow].iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < w {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Sum with four accumulators so the loop vectorises.
#[inline]
pub(super) fn sum(x: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut chunks = x.chunks_exact(4);
    for c in &mut chunks {
        for j in 0..4 {
            acc[j] += c[j];
        }
    }
    let tail: f64 = chunks.remainder().iter().sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Σ (x − mean)², four accumulators.
#[inline]
fn squared_deviation(x: &[f64], mean: f64) -> f64 {
    let mut acc = [0.0; 4];
    let mut chunks = x.chunks_exact(4);
    for c in &mut chunks {
        for j in 0..4 {
            acc[j] += (c[j] - mean) * (c[j] - mean);
        }
    }
    let tail: f64 = chunks.remainder().iter().map(|v| (v - mean) * (v - mean)).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    // four accumulators so the loop vectorises
    let mut acc = [0.0; 4];
    let chunks = x.len() / 4;
    for i in 0..chunks {
        for (j, a) in acc.iter_mut().enumerate() {
            *a += x[4 * i + j] * y[4 * i + j];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..x.len() {
        tail += x[i] * y[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// 2-D convolution. `weight` is `[out][in][k][k]`; `bias` may be empty.
pub fn conv2d_forward(x: &Tensor4, weight: &[f64], bias: &[f64], g: &ConvGeometry) -> Tensor4 {
    let [n, c, h, w] = x.shape();
    assert_eq!(c, g.in_channels, "conv input channels");
    assert_eq!(weight.len(), g.weight_len(), "conv weight length");
    if g.is_same_3x3() {
        return direct::conv3x3_forward(x, weight, bias, g.out_channels);
    }
    let (oh, ow) = g.out_hw(h, w);
    let positions = oh * ow;
    let rows = g.fan_in();
    let mut out = Tensor4::zeros([n, g.out_channels, oh, ow]);
    let mut col = vec![0.0; rows * positions];
    for b in 0..n {
        im2col(x.item(b), h, w, g, oh, ow, &mut col);
        let y = out.item_mut(b);
        if !bias.is_empty() {
            for (co, dst) in y.chunks_exact_mut(positions).enumerate() {
                dst.fill(bias[co]);
            }
        }
        // y[co][p] += Σ_r weight[co][r] · col[r][p]
        gemm(g.out_channels, rows, positions, weight, Layout::Rows, &col, Layout::Rows, y);
    }
    out
}

#[derive(Clone, Copy)]
pub(super) enum Layout {
    Rows,
    Transposed,
}

/// `c (m×n) += a (m×k) · b (k×n)`, where each operand is stored row-major
/// either as given or transposed.
#[allow(clippy::too_many_arguments)]
pub(super) fn gemm(m: usize, k: usize, n: usize, a: &[f64], la: Layout, b: &[f64], lb: Layout, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = match la {
        Layout::Rows => (k as isize, 1),
        Layout::Transposed => (1, m as isize),
    };
    let (rsb, csb) = match lb {
        Layout::Rows => (n as isize, 1),
        Layout::Transposed => (1, k as isize),
    };
    // SAFETY: the bounds above cover every index the strides reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Returns `dx`; adds into `dweight` and (when non-empty) `dbias`.
pub fn conv2d_backward(
    x: &Tensor4,
    dy: &Tensor4,
    weight: &[f64],
    g: &ConvGeometry,
    dweight: &mut [f64],
    dbias: &mut [f64],
) -> Tensor4 {
    conv2d_gradients(x, dy, weight, g, dweight, dbias, true).expect("input gradient requested")
}

/// As [`conv2d_backward`], skipping the input gradient unless
/// `input_grad` is set.
pub(super) fn conv2d_gradients(
    x: &Tensor4,
    dy: &Tensor4,
    weight: &[f64],
    g: &ConvGeometry,
    dweight: &mut [f64],
    dbias: &mut [f64],
    input_grad: bool,
) -> Option<Tensor4> {
    if g.is_same_3x3() {
        return direct::conv3x3_backward(x, dy, weight, dweight, dbias, input_grad);
    }
    let [n, _, h, w] = x.shape();
    let (oh, ow) = g.out_hw(h, w);
    let positions = oh * ow;
    let rows = g.fan_in();
    let mut dx = Tensor4::zeros(x.shape());
    let mut col = vec![0.0; rows * positions];
    let mut dcol = vec![0.0; rows * positions];
    for b in 0..n {
        im2col(x.item(b), h, w, g, oh, ow, &mut col);
        let dyb = dy.item(b);
        dcol.fill(0.0);
        if !dbias.is_empty() {
            for (co, d) in dyb.chunks_exact(positions).enumerate() {
                dbias[co] += sum(d);
            }
        }
        // dweight[co][r] += Σ_p dy[co][p] · col[r][p]
        gemm(g.out_channels, positions, rows, dyb, Layout::Rows, &col, Layout::Transposed, dweight);
        if !input_grad {
            continue;
        }
        // dcol[r][p] = Σ_co weight[co][r] · dy[co][p]
        gemm(rows, g.out_channels, positions, weight, Layout::Transposed, dyb, Layout::Rows, &mut dcol);
        col2im(&dcol, h, w, g, oh, ow, dx.item_mut(b));
    }
    input_grad.then_some(dx)
}

/// Saved state for the batch-norm backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Tensor4,
    inv_std: Vec<f64>,
    /// Whether batch statistics were used (train mode).
    batch_stats: bool,
}

/// Per-channel normalisation over batch and spatial positions.
///
/// In train mode the batch mean and biased variance normalise the input and
/// the running statistics move by `momentum` toward the batch mean and the
/// unbiased batch variance. In eval mode the running statistics are used.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward(
    x: &Tensor4,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &mut [f64],
    running_var: &mut [f64],
    momentum: f64,
    epsilon: f64,
    train: bool,
) -> (Tensor4, BnCache) {
    let [n, c, h, w] = x.shape();
    let plane = h * w;
    let count = n * plane;
    let mut xhat = Tensor4::zeros(x.shape());
    let mut y = Tensor4::zeros(x.shape());
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let (mean, var) = if train {
            let mut sum = 0.0;
            for b in 0..n {
                sum += self::sum(&x.item(b)[ch * plane..(ch + 1) * plane]);
            }
            let mean = sum / count as f64;
            let mut sq = 0.0;
            for b in 0..n {
                sq += squared_deviation(&x.item(b)[ch * plane..(ch + 1) * plane], mean);
            }
            let var = sq / count as f64;
            let unbiased = if count > 1 { sq / (count - 1) as f64 } else { var };
            running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mean;
            running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * unbiased;
            (mean, var)
        } else {
            (running_mean[ch], running_var[ch])
        };
        let istd = 1.0 / (var + epsilon).sqrt();
        inv_std[ch] = istd;
        for b in 0..n {
            let src = &x.item(b)[ch * plane..(ch + 1) * plane];
            let xh = &mut xhat.item_mut(b)[ch * plane..(ch + 1) * plane];
            for (d, &v) in xh.iter_mut().zip(src) {
                *d = (v - mean) * istd;
            }
            let xh = &xhat.item(b)[ch * plane..(ch + 1) * plane];
            let dst = &mut y.item_mut(b)[ch * plane..(ch + 1) * plane];
            for (d, &v) in dst.iter_mut().zip(xh) {
                *d = gamma[ch] * v + beta[ch];
            }
        }
    }
    (
        y,
        BnCache {
            xhat,
            inv_std,
            batch_stats: train,
        },
    )
}

pub fn batchnorm_backward(
    dy: &Tensor4,
    cache: &BnCache,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Tensor4 {
    let [n, c, h, w] = dy.shape();
    let plane = h * w;
    let count = (n * plane) as f64;
    let mut dx = Tensor4::zeros(dy.shape());
    for ch in 0..c {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for b in 0..n {
            let d = &dy.item(b)[ch * plane..(ch + 1) * plane];
            let xh = &cache.xhat.item(b)[ch * plane..(ch + 1) * plane];
            sum_dy += sum(d);
            sum_dy_xhat += dot(d, xh);
        }
        dgamma[ch] += sum_dy_xhat;
        dbeta[ch] += sum_dy;
        let scale = gamma[ch] * cache.inv_std[ch];
        for b in 0..n {
            let d = &dy.item(b)[ch * plane..(ch + 1) * plane];
            let xh = &cache.xhat.item(b)[ch * plane..(ch + 1) * plane];
            let dst = &mut dx.item_mut(b)[ch * plane..(ch + 1) * plane];
            if cache.batch_stats {
                let mean_dy = sum_dy / count;
                let mean_dy_xhat = sum_dy_xhat / count;
                for ((o, &dv), &xv) in dst.iter_mut().zip(d).zip(xh) {
                    *o = scale * (dv - mean_dy - xv * mean_dy_xhat);
                }
            } else {
                for (o, &dv) in dst.iter_mut().zip(d) {
                    *o = scale * dv;
                }
            }
        }
    }
    dx
}

pub fn relu_forward(x: &Tensor4) -> Tensor4 {
    x.map(|v| v.max(0.0))
}

/// Gradient through a ReLU given its output.
pub fn relu_backward(y: &Tensor4, dy: &Tensor4) -> Tensor4 {
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Max pooling without padding; returns the output and, for every output
/// value, the flat index of the winning input value.
pub fn maxpool_forward(x: &Tensor4, kernel: usize, stride: usize) -> (Tensor4, Vec<usize>) {
    let [n, c, h, w] = x.shape();
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut y = Tensor4::zeros([n, c, oh, ow]);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    let out = y.data_mut();
    let mut o = 0;
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride * w + ox * stride;
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                            if data[idx] > data[best] {
                                best = idx;
                            }
                        }
                    }
                    out[o] = data[best];
                    argmax.push(best);
                    o += 1;
                }
            }
        }
    }
    (y, argmax)
}

pub fn maxpool_backward(dy: &Tensor4, argmax: &[usize], in_shape: [usize; 4]) -> Tensor4 {
    let mut dx = Tensor4::zeros(in_shape);
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(dy.data()) {
        d[idx] += g;
    }
    dx
}

pub fn gap_forward(x: &Tensor4) -> Tensor4 {
    let [n, c, _, _] = x.shape();
    let plane = x.plane_len();
    let data = x
        .data()
        .chunks_exact(plane)
        .map(|p| sum(p) / plane as f64)
        .collect();
    Tensor4::from_vec([n, c, 1, 1], data).expect("shape")
}

pub fn gap_backward(dy: &Tensor4, in_shape: [usize; 4]) -> Tensor4 {
    let plane = in_shape[2] * in_shape[3];
    let mut dx = Tensor4::zeros(in_shape);
    for (chunk, &g) in dx.data_mut().chunks_exact_mut(plane).zip(dy.data()) {
        chunk.fill(g / plane as f64);
    }
    dx
}

/// Fully connected layer over the flattened item; `weight` is `[out][in]`.
pub fn linear_forward(x: &Tensor4, weight: &[f64], bias: &[f64], outputs: usize) -> Tensor4 {
    let n = x.batch();
    let inputs = x.item_len();
    let mut y = Tensor4::zeros([n, outputs, 1, 1]);
    for b in 0..n {
        let xb = x.item(b);
        let yb = y.item_mut(b);
        for o in 0..outputs {
            yb[o] = bias[o] + dot(&weight[o * inputs..(o + 1) * inputs], xb);
        }
    }
    y
}

pub fn linear_backward(
    x: &Tensor4,
    dy: &Tensor4,
    weight: &[f64],
    outputs: usize,
    dweight: &mut [f64],
    dbias: &mut [f64],
) -> Tensor4 {
    let n = x.batch();
    let inputs = x.item_len();
    let mut dx = Tensor4::zeros(x.shape());
    for b in 0..n {
        let xb = x.item(b);
        let dyb = dy.item(b);
        let dxb = dx.item_mut(b);
        for o in 0..outputs {
            dbias[o] += dyb[o];
            axpy(dyb[o], xb, &mut dweight[o * inputs..(o + 1) * inputs]);
            axpy(dyb[o], &weight[o * inputs..(o + 1) * inputs], dxb);
        }
    }
    dx
}
