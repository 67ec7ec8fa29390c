//! Direct kernels for 3×3 convolutions with stride 1 and padding 1, the
//! bulk of the model's arithmetic. Inputs are copied into a zero border so
//! the inner loops need no bounds tests, and output tiles accumulate in
//! fixed-size arrays that stay in registers.
//!
//! Summation order is fixed. On CPUs with FMA the multiply-adds are fused,
//! so results can differ in the last bits between machines, never between
//! runs on one machine.

use super::layers::{gemm, Layout};
use super::tensor::Tensor4;

const LANES: usize = 4;
const WIDE: usize = 4;
const BLOCK: usize = 8;

trait Mac {
    fn mac(acc: f64, a: f64, b: f64) -> f64;
}

struct Plain;
struct Fused;

impl Mac for Plain {
    #[inline(always)]
    fn mac(acc: f64, a: f64, b: f64) -> f64 {
        acc + a * b
    }
}

impl Mac for Fused {
    #[inline(always)]
    fn mac(acc: f64, a: f64, b: f64) -> f64 {
        a.mul_add(b, acc)
    }
}

fn pad1(x: &[f64], c: usize, h: usize, w: usize, out: &mut Vec<f64>) {
    let (ph, pw) = (h + 2, w + 2);
    out.clear();
    out.resize(c * ph * pw, 0.0);
    for ch in 0..c {
        for y in 0..h {
            out[(ch * ph + y + 1) * pw + 1..][..w].copy_from_slice(&x[(ch * h + y) * w..][..w]);
        }
    }
}

/// `out[co][oy][ox] += Σ wt[ci][k][co] · xp[ci][oy+ky][ox+kx]` for an
/// output tile of `B` channels × `L` columns.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn tile<M: Mac, const B: usize, const L: usize>(
    xp: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    wt: &[f64],
    cout: usize,
    co0: usize,
    oy: usize,
    ox: usize,
    out: &mut [f64],
) {
    let (ph, pw) = (h + 2, w + 2);
    let mut acc = [[0.0f64; L]; B];
    for ci in 0..cin {
        for ky in 0..3 {
            let row = &xp[(ci * ph + oy + ky) * pw + ox..][..L + 2];
            for kx in 0..3 {
                let xs: &[f64; L] = row[kx..kx + L].try_into().unwrap();
                let ws: &[f64; B] = wt[(ci * 9 + ky * 3 + kx) * cout + co0..][..B].try_into().unwrap();
                for b in 0..B {
                    for l in 0..L {
                        acc[b][l] = M::mac(acc[b][l], ws[b], xs[l]);
                    }
                }
            }
        }
    }
    for (b, a) in acc.iter().enumerate() {
        let dst = &mut out[((co0 + b) * h + oy) * w + ox..][..L];
        for l in 0..L {
            dst[l] += a[l];
        }
    }
}

#[inline(always)]
fn channel_block<M: Mac, const B: usize>(
    xp: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    wt: &[f64],
    cout: usize,
    co0: usize,
    out: &mut [f64],
) {
    for oy in 0..h {
        let mut ox = 0;
        while ox + WIDE <= w {
            tile::<M, B, WIDE>(xp, cin, h, w, wt, cout, co0, oy, ox, out);
            ox += WIDE;
        }
        while ox + LANES <= w {
            tile::<M, B, LANES>(xp, cin, h, w, wt, cout, co0, oy, ox, out);
            ox += LANES;
        }
        while ox < w {
            tile::<M, B, 1>(xp, cin, h, w, wt, cout, co0, oy, ox, out);
            ox += 1;
        }
    }
}

/// Correlate one padded item with weights laid out `[ci][ky][kx][co]`.
#[inline(always)]
fn correlate<M: Mac>(xp: &[f64], cin: usize, h: usize, w: usize, wt: &[f64], cout: usize, out: &mut [f64]) {
    let mut co = 0;
    while co < cout {
        if cout - co >= BLOCK {
            channel_block::<M, BLOCK>(xp, cin, h, w, wt, cout, co, out);
            co += BLOCK;
        } else {
            channel_block::<M, 1>(xp, cin, h, w, wt, cout, co, out);
            co += 1;
        }
    }
}

/// Rows `[ci][ky][kx]` of the shifted views of a padded input, each of
/// length `h·w`.
fn unfold(xp: &[f64], cin: usize, h: usize, w: usize, col: &mut [f64]) {
    let (ph, pw, plane) = (h + 2, w + 2, h * w);
    for ci in 0..cin {
        for k in 0..9 {
            let (ky, kx) = (k / 3, k % 3);
            let row = &mut col[(ci * 9 + k) * plane..][..plane];
            for oy in 0..h {
                row[oy * w..][..w].copy_from_slice(&xp[(ci * ph + oy + ky) * pw + kx..][..w]);
            }
        }
    }
}

#[inline(always)]
fn forward_impl<M: Mac>(x: &Tensor4, weight: &[f64], bias: &[f64], cout: usize) -> Tensor4 {
    let [n, cin, h, w] = x.shape();
    // [co][ci][k] -> [ci][k][co]
    let mut wt = vec![0.0; weight.len()];
    for co in 0..cout {
        for r in 0..cin * 9 {
            wt[r * cout + co] = weight[co * cin * 9 + r];
        }
    }
    let mut out = Tensor4::zeros([n, cout, h, w]);
    let mut xp = Vec::new();
    for b in 0..n {
        pad1(x.item(b), cin, h, w, &mut xp);
        let y = out.item_mut(b);
        if !bias.is_empty() {
            for (co, plane) in y.chunks_exact_mut(h * w).enumerate() {
                plane.fill(bias[co]);
            }
        }
        correlate::<M>(&xp, cin, h, w, &wt, cout, y);
    }
    out
}

#[inline(always)]
fn backward_impl<M: Mac>(
    x: &Tensor4,
    dy: &Tensor4,
    weight: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    input_grad: bool,
) -> Option<Tensor4> {
    let [n, cin, h, w] = x.shape();
    let cout = dy.shape()[1];
    let plane = h * w;
    // dx is the correlation of padded dy with the flipped kernel, in and
    // out channels swapped: [co][ky'][kx'][ci] = weight[co][ci][2-ky'][2-kx'].
    let mut wf = vec![0.0; weight.len()];
    for co in 0..cout {
        for ci in 0..cin {
            for k in 0..9 {
                wf[(co * 9 + k) * cin + ci] = weight[(co * cin + ci) * 9 + (8 - k)];
            }
        }
    }
    let mut dx = Tensor4::zeros(if input_grad { x.shape() } else { [0; 4] });
    let mut xp = Vec::new();
    let mut dyp = Vec::new();
    let mut col = vec![0.0; cin * 9 * plane];
    for b in 0..n {
        let dyb = dy.item(b);
        if !dbias.is_empty() {
            for (co, d) in dyb.chunks_exact(plane).enumerate() {
                dbias[co] += super::layers::sum(d);
            }
        }
        pad1(x.item(b), cin, h, w, &mut xp);
        unfold(&xp, cin, h, w, &mut col);
        gemm(cout, plane, cin * 9, dyb, Layout::Rows, &col, Layout::Transposed, dweight);
        if input_grad {
            pad1(dyb, cout, h, w, &mut dyp);
            correlate::<M>(&dyp, cout, h, w, &wf, cin, dx.item_mut(b));
        }
    }
    input_grad.then_some(dx)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn forward_fma(x: &Tensor4, weight: &[f64], bias: &[f64], cout: usize) -> Tensor4 {
    forward_impl::<Fused>(x, weight, bias, cout)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn backward_fma(
    x: &Tensor4,
    dy: &Tensor4,
    weight: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    input_grad: bool,
) -> Option<Tensor4> {
    backward_impl::<Fused>(x, dy, weight, dweight, dbias, input_grad)
}

#[cfg(target_arch = "x86_64")]
fn has_fma() -> bool {
    std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
}

pub(super) fn conv3x3_forward(x: &Tensor4, weight: &[f64], bias: &[f64], cout: usize) -> Tensor4 {
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the CPU supports AVX2 and FMA.
        return unsafe { forward_fma(x, weight, bias, cout) };
    }
    forward_impl::<Plain>(x, weight, bias, cout)
}

pub(super) fn conv3x3_backward(
    x: &Tensor4,
    dy: &Tensor4,
    weight: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    input_grad: bool,
) -> Option<Tensor4> {
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the CPU supports AVX2 and FMA.
        return unsafe { backward_fma(x, dy, weight, dweight, dbias, input_grad) };
    }
    backward_impl::<Plain>(x, dy, weight, dweight, dbias, input_grad)
}
