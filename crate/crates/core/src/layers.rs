//! Layer primitives with hand-written forward and backward passes.
//!
//! Feature maps are `[h, w, c]`; convolution kernels are `[3, 3, c_in, f]`;
//! dense weights are `[n_in, n_out]`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use crate::Mode;

/// Gradients of a layer: w.r.t. its input and (in order) its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients<T> {
    pub d_input: Tensor<T>,
    pub d_params: Vec<Tensor<T>>,
}

pub const KERNEL: usize = 3;

fn conv_dims<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    let (h, w, c) = input.dims3("conv2d")?;
    if h < KERNEL || w < KERNEL {
        return Err(Error::TooSmall {
            op: "conv2d",
            min: vec![KERNEL, KERNEL, c],
            found: input.shape().to_vec(),
        });
    }
    let f = match kernels.shape() {
        &[KERNEL, KERNEL, kc, f] if kc == c => f,
        found => {
            return Err(Error::ShapeMismatch {
                op: "conv2d kernels",
                expected: vec![KERNEL, KERNEL, c, kernels.shape().last().copied().unwrap_or(0)],
                found: found.to_vec(),
            })
        }
    };
    bias.expect_shape("conv2d bias", &[f])?;
    Ok((h, w, c, f))
}

/// Row-major `(i, j)` over rows of width `ow`, without per-pixel division.
fn grid(ow: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..).flat_map(move |i| (0..ow).map(move |j| (i, j)))
}

/// Valid (unpadded) 3×3 convolution with stride 1.
///
/// Each output is `bias + Σ_{ky, kx, ci} x · k`, accumulated in that order.
pub fn conv2d_valid<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (h, w, c, f) = conv_dims(input, kernels, bias)?;
    let (oh, ow) = (h - 2, w - 2);
    let mut out = vec![T::zero(); oh * ow * f];
    conv_forward_kernel(input.data(), kernels.data(), bias.data(), &mut out, w, c, f);
    Tensor::new([oh, ow, f], out)
}

/// Fixed filter counts get register-resident accumulators.
fn conv_forward_kernel<T: Real>(x: &[T], k: &[T], bias: &[T], out: &mut [T], w: usize, c: usize, f: usize) {
    match f {
        2 => conv_forward_fixed::<T, 2>(x, k, bias, out, w, c),
        4 => conv_forward_fixed::<T, 4>(x, k, bias, out, w, c),
        8 => conv_forward_fixed::<T, 8>(x, k, bias, out, w, c),
        16 => conv_forward_fixed::<T, 16>(x, k, bias, out, w, c),
        _ => conv_forward_any(x, k, bias, out, w, c, f),
    }
}

fn conv_forward_fixed<T: Real, const N: usize>(x: &[T], k: &[T], bias: &[T], out: &mut [T], w: usize, c: usize) {
    let ow = w - 2;
    let span = KERNEL * c;
    let bias: [T; N] = bias.try_into().expect("bias length");
    let kernel: Vec<[T; N]> = k.chunks_exact(N).map(|r| r.try_into().expect("row")).collect();
    for ((i, j), o) in grid(ow).zip(out.chunks_exact_mut(N)) {
        let mut acc = bias;
        for ky in 0..KERNEL {
            let seg = &x[((i + ky) * w + j) * c..][..span];
            let kb = &kernel[ky * span..][..span];
            for (&xv, kr) in seg.iter().zip(kb) {
                for q in 0..N {
                    acc[q] += xv * kr[q];
                }
            }
        }
        o.copy_from_slice(&acc);
    }
}

fn conv_forward_any<T: Real>(x: &[T], k: &[T], bias: &[T], out: &mut [T], w: usize, c: usize, f: usize) {
    let ow = w - 2;
    let span = KERNEL * c;
    for ((i, j), o) in grid(ow).zip(out.chunks_exact_mut(f)) {
        o.copy_from_slice(bias);
        for ky in 0..KERNEL {
            // The three input pixels of one kernel row are contiguous.
            let seg = &x[((i + ky) * w + j) * c..][..span];
            let kb = &k[ky * span * f..][..span * f];
            for (&xv, kr) in seg.iter().zip(kb.chunks_exact(f)) {
                for (ov, &kv) in o.iter_mut().zip(kr) {
                    *ov += xv * kv;
                }
            }
        }
    }
}

/// Gradients of [`conv2d_valid`]. `d_params` is `[d_kernels, d_bias]`.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<LayerGradients<T>> {
    conv2d_backward_impl(input, kernels, upstream, true)
}

/// Same as [`conv2d_backward`]; when `with_input` is false the returned
/// `d_input` is an empty tensor (used for the first layer).
pub(crate) fn conv2d_backward_impl<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    upstream: &Tensor<T>,
    with_input: bool,
) -> Result<LayerGradients<T>> {
    let f = kernels.shape().last().copied().unwrap_or(0);
    let (h, w, c, f) = conv_dims(input, kernels, &Tensor::zeros([f]))?;
    let (oh, ow) = (h - 2, w - 2);
    upstream.expect_shape("conv2d upstream", &[oh, ow, f])?;
    let mut dk = vec![T::zero(); KERNEL * KERNEL * c * f];
    let mut db = vec![T::zero(); f];
    let mut dx = if with_input {
        vec![T::zero(); h * w * c]
    } else {
        Vec::new()
    };
    conv_backward_kernel(
        input.data(),
        kernels.data(),
        upstream.data(),
        &mut dk,
        &mut db,
        &mut dx,
        w,
        c,
        f,
    );
    let d_input = if with_input {
        Tensor::new([h, w, c], dx)?
    } else {
        Tensor::zeros([0])
    };
    Ok(LayerGradients {
        d_input,
        d_params: vec![
            Tensor::new([KERNEL, KERNEL, c, f], dk)?,
            Tensor::new([f], db)?,
        ],
    })
}

#[allow(clippy::too_many_arguments)]
fn conv_backward_kernel<T: Real>(
    x: &[T],
    k: &[T],
    up: &[T],
    dk: &mut [T],
    db: &mut [T],
    dx: &mut [T],
    w: usize,
    c: usize,
    f: usize,
) {
    match f {
        2 => conv_backward_fixed::<T, 2>(x, k, up, dk, db, dx, w, c),
        4 => conv_backward_fixed::<T, 4>(x, k, up, dk, db, dx, w, c),
        8 => conv_backward_fixed::<T, 8>(x, k, up, dk, db, dx, w, c),
        16 => conv_backward_fixed::<T, 16>(x, k, up, dk, db, dx, w, c),
        _ => conv_backward_any(x, k, up, dk, db, dx, w, c, f),
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward_fixed<T: Real, const N: usize>(
    x: &[T],
    k: &[T],
    up: &[T],
    dk: &mut [T],
    db: &mut [T],
    dx: &mut [T],
    w: usize,
    c: usize,
) {
    let span = KERNEL * c;
    let rows = KERNEL * span;
    let mut dkr: Vec<[T; N]> = vec![[T::zero(); N]; rows];
    let mut dbr = [T::zero(); N];
    for u in up.chunks_exact(N) {
        for q in 0..N {
            dbr[q] += u[q];
        }
    }
    if !dx.is_empty() {
        if c == N {
            input_grad_square::<T, N>(k, up, dx, w);
        } else {
            input_grad_scatter::<T, N>(k, up, dx, w, c);
        }
    }
    // Kernel gradient as a (9c × pixels) · (pixels × N) product, tiled over
    // four patch rows at a time; each entry still sums pixels in order.
    for ky in 0..KERNEL {
        let mut q0 = 0;
        while q0 + 4 <= span {
            let tile = dk_tile::<T, N, 4>(x, up, w, c, ky, q0);
            dkr[ky * span + q0..][..4].copy_from_slice(&tile);
            q0 += 4;
        }
        let rest = &mut dkr[ky * span + q0..][..span - q0];
        match span - q0 {
            3 => rest.copy_from_slice(&dk_tile::<T, N, 3>(x, up, w, c, ky, q0)),
            2 => rest.copy_from_slice(&dk_tile::<T, N, 2>(x, up, w, c, ky, q0)),
            1 => rest.copy_from_slice(&dk_tile::<T, N, 1>(x, up, w, c, ky, q0)),
            _ => {}
        }
    }
    for (dst, src) in dk.chunks_exact_mut(N).zip(&dkr) {
        dst.copy_from_slice(src);
    }
    db.copy_from_slice(&dbr);
}

/// Input gradient when `c == N`, gathered per input pixel:
/// `dx[y, x, :] = Σ_{ky, kx} Σ_o up[y - ky, x - kx, o] · k[ky, kx, :, o]`.
fn input_grad_square<T: Real, const N: usize>(k: &[T], up: &[T], dx: &mut [T], w: usize) {
    let h = dx.len() / (w * N);
    let (oh, ow) = (h - 2, w - 2);
    // `kt[tap][o]` holds the kernel column over input channels.
    let mut kt = vec![[[T::zero(); N]; N]; KERNEL * KERNEL];
    for (r, kr) in k.chunks_exact(N).enumerate() {
        let (tap, ci) = (r / N, r % N);
        for (o, &v) in kr.iter().enumerate() {
            kt[tap][o][ci] = v;
        }
    }
    for (y, dx_row) in dx.chunks_exact_mut(w * N).enumerate() {
        let ky_lo = y.saturating_sub(oh - 1);
        let ky_hi = y.min(KERNEL - 1);
        for (x, d) in dx_row.chunks_exact_mut(N).enumerate() {
            let kx_lo = x.saturating_sub(ow - 1);
            let kx_hi = x.min(KERNEL - 1);
            let mut acc = [T::zero(); N];
            for ky in ky_lo..=ky_hi {
                for kx in kx_lo..=kx_hi {
                    let u: &[T; N] = up[((y - ky) * ow + x - kx) * N..][..N].try_into().expect("row");
                    let taps = &kt[ky * KERNEL + kx];
                    for o in 0..N {
                        let uv = u[o];
                        for ci in 0..N {
                            acc[ci] += uv * taps[o][ci];
                        }
                    }
                }
            }
            d.copy_from_slice(&acc);
        }
    }
}

/// Input gradient for any channel count: one patch per output pixel,
/// scattered back onto the input.
fn input_grad_scatter<T: Real, const N: usize>(k: &[T], up: &[T], dx: &mut [T], w: usize, c: usize) {
    let ow = w - 2;
    let span = KERNEL * c;
    let rows = KERNEL * span;
    let mut kt = vec![T::zero(); N * rows];
    for (r, kr) in k.chunks_exact(N).enumerate() {
        for (q, &v) in kr.iter().enumerate() {
            kt[q * rows + r] = v;
        }
    }
    let mut patch = vec![T::zero(); rows];
    for ((i, j), u) in grid(ow).zip(up.chunks_exact(N)) {
        patch.fill(T::zero());
        for (q, &uv) in u.iter().enumerate() {
            for (pv, &kv) in patch.iter_mut().zip(&kt[q * rows..][..rows]) {
                *pv += kv * uv;
            }
        }
        for ky in 0..KERNEL {
            let pos = ((i + ky) * w + j) * c;
            for (d, &v) in dx[pos..][..span].iter_mut().zip(&patch[ky * span..][..span]) {
                *d += v;
            }
        }
    }
}

/// `Σ_p x[p, patch row q0 + t] · up[p, :]` for `t < Q`, kernel row `ky`.
fn dk_tile<T: Real, const N: usize, const Q: usize>(
    x: &[T],
    up: &[T],
    w: usize,
    c: usize,
    ky: usize,
    q0: usize,
) -> [[T; N]; Q] {
    let ow = w - 2;
    let mut acc = [[T::zero(); N]; Q];
    for (i, urow) in up.chunks_exact(ow * N).enumerate() {
        let xrow = &x[(i + ky) * w * c + q0..][..(ow - 1) * c + Q];
        for (j, u) in urow.chunks_exact(N).enumerate() {
            let u: &[T; N] = u.try_into().expect("row");
            let xs: &[T; Q] = xrow[j * c..][..Q].try_into().expect("tile");
            for t in 0..Q {
                let xv = xs[t];
                for q in 0..N {
                    acc[t][q] += xv * u[q];
                }
            }
        }
    }
    acc
}

#[allow(clippy::too_many_arguments)]
fn conv_backward_any<T: Real>(
    x: &[T],
    k: &[T],
    up: &[T],
    dk: &mut [T],
    db: &mut [T],
    dx: &mut [T],
    w: usize,
    c: usize,
    f: usize,
) {
    let ow = w - 2;
    let span = KERNEL * c;
    let with_input = !dx.is_empty();
    for ((i, j), u) in grid(ow).zip(up.chunks_exact(f)) {
        for (b, &uv) in db.iter_mut().zip(u) {
            *b += uv;
        }
        for ky in 0..KERNEL {
            let pos = ((i + ky) * w + j) * c;
            let seg = &x[pos..][..span];
            let dkb = &mut dk[ky * span * f..][..span * f];
            for (&xv, dkr) in seg.iter().zip(dkb.chunks_exact_mut(f)) {
                for (d, &uv) in dkr.iter_mut().zip(u) {
                    *d += xv * uv;
                }
            }
            if with_input {
                let kb = &k[ky * span * f..][..span * f];
                for (d, kr) in dx[pos..][..span].iter_mut().zip(kb.chunks_exact(f)) {
                    let mut acc = T::zero();
                    for (&kv, &uv) in kr.iter().zip(u) {
                        acc += kv * uv;
                    }
                    *d += acc;
                }
            }
        }
    }
}

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Passes `upstream` where `input > 0`; the subgradient at 0 is 0.
pub fn relu_backward<T: Real>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    upstream.expect_shape("relu upstream", input.shape())?;
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &u)| if x > T::zero() { u } else { T::zero() })
        .collect();
    Tensor::new(input.shape(), data)
}

/// Output of [`maxpool_2x2`]: pooled map plus, per output cell, the flat
/// input index that won the window.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<u32>,
}

/// 2×2 max pooling with stride 2; an odd trailing row/column is dropped.
/// Ties go to the first cell in row-major order.
pub fn maxpool_2x2<T: Real>(input: &Tensor<T>) -> Result<Pooled<T>> {
    let (h, w, c) = input.dims3("maxpool")?;
    if h < 2 || w < 2 {
        return Err(Error::TooSmall {
            op: "maxpool",
            min: vec![2, 2, c],
            found: input.shape().to_vec(),
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut argmax = Vec::with_capacity(oh * ow * c);
    for i in 0..oh {
        let top = 2 * i * w * c;
        let bottom = top + w * c;
        let (r0, r1) = (&x[top..][..2 * ow * c], &x[bottom..][..2 * ow * c]);
        for j in 0..ow {
            let o = 2 * j * c;
            for ch in 0..c {
                let cells = [
                    (r0[o + ch], top + o + ch),
                    (r0[o + c + ch], top + o + c + ch),
                    (r1[o + ch], bottom + o + ch),
                    (r1[o + c + ch], bottom + o + c + ch),
                ];
                let (mut v, mut at) = cells[0];
                for &(cv, ci) in &cells[1..] {
                    if cv > v {
                        v = cv;
                        at = ci;
                    }
                }
                out.push(v);
                argmax.push(at as u32);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new([oh, ow, c], out)?,
        argmax,
    })
}

/// Routes each upstream value to its window's argmax cell.
pub fn maxpool_backward<T: Real>(
    input_shape: &[usize],
    pooled: &Pooled<T>,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    upstream.expect_shape("maxpool upstream", pooled.output.shape())?;
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &u) in pooled.argmax.iter().zip(upstream.data()) {
        d[idx as usize] += u;
    }
    Ok(dx)
}

fn dense_dims<T: Real>(input: &Tensor<T>, weights: &Tensor<T>) -> Result<(usize, usize)> {
    let n = input.len();
    match weights.shape() {
        &[wn, m] if wn == n => Ok((n, m)),
        found => Err(Error::ShapeMismatch {
            op: "dense weights",
            expected: vec![n, weights.shape().last().copied().unwrap_or(0)],
            found: found.to_vec(),
        }),
    }
}

/// `out = inputᵀ·W + b` for a flat input of length `n` and `W: [n, m]`.
pub fn dense<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, m) = dense_dims(input, weights)?;
    bias.expect_shape("dense bias", &[m])?;
    let mut out = bias.data().to_vec();
    for (&xv, row) in input.data().iter().zip(weights.data().chunks_exact(m)) {
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xv * wv;
        }
    }
    Ok(Tensor::vector(out))
}

/// Gradients of [`dense`]. `d_input` is flat; `d_params` is `[d_weights, d_bias]`.
pub fn dense_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<LayerGradients<T>> {
    let (n, m) = dense_dims(input, weights)?;
    upstream.expect_shape("dense upstream", &[m])?;
    let u = upstream.data();
    let mut dw = Vec::with_capacity(n * m);
    let mut dx = Vec::with_capacity(n);
    for (&xv, row) in input.data().iter().zip(weights.data().chunks_exact(m)) {
        dw.extend(u.iter().map(|&uv| xv * uv));
        dx.push(row.iter().zip(u).map(|(&wv, &uv)| wv * uv).sum());
    }
    Ok(LayerGradients {
        d_input: Tensor::vector(dx),
        d_params: vec![Tensor::new([n, m], dw)?, upstream.clone()],
    })
}

/// Output of [`dropout`]: the result plus the per-element scale that was
/// applied (`0` or `1/(1-rate)`), or `None` when the layer was the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Dropped<T> {
    pub output: Tensor<T>,
    pub mask: Option<Vec<T>>,
}

/// Inverted dropout.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Dropped<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(rate));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(Dropped {
            output: input.clone(),
            mask: None,
        });
    }
    let scale = T::of(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..input.len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                scale
            }
        })
        .collect();
    let out = input.data().iter().zip(&mask).map(|(&x, &s)| x * s).collect();
    Ok(Dropped {
        output: Tensor::new(input.shape(), out)?,
        mask: Some(mask),
    })
}

pub fn dropout_backward<T: Real>(dropped: &Dropped<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    upstream.expect_shape("dropout upstream", dropped.output.shape())?;
    Ok(match &dropped.mask {
        None => upstream.clone(),
        Some(mask) => Tensor::new(
            upstream.shape(),
            upstream.data().iter().zip(mask).map(|(&u, &s)| u * s).collect(),
        )?,
    })
}

/// Max-subtracted softmax.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.is_empty() {
        return Err(Error::Empty("softmax logits"));
    }
    if !logits.all_finite() {
        return Err(Error::NonFinite { op: "softmax" });
    }
    let max = logits
        .data()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.data().iter().map(|&z| math::exp(z - max)).collect();
    let total: T = exps.iter().copied().sum();
    Ok(Tensor::new(
        logits.shape(),
        exps.into_iter().map(|e| e / total).collect(),
    )?)
}

/// Vector-Jacobian product of softmax: `dz_i = p_i (g_i - Σ_j p_j g_j)`.
pub fn softmax_backward<T: Real>(probs: &Tensor<T>, d_probs: &Tensor<T>) -> Result<Tensor<T>> {
    d_probs.expect_shape("softmax upstream", probs.shape())?;
    let dot: T = probs
        .data()
        .iter()
        .zip(d_probs.data())
        .map(|(&p, &g)| p * g)
        .sum();
    Ok(Tensor::new(
        probs.shape(),
        probs
            .data()
            .iter()
            .zip(d_probs.data())
            .map(|(&p, &g)| p * (g - dot))
            .collect(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn fixed_backward_kernels_agree_with_generic_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (c, f) in [(2, 2), (4, 4), (8, 8), (16, 16), (1, 8), (3, 4)] {
            let (h, w) = (rng.random_range(3..12), rng.random_range(3..12));
            let mut rand = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
            let (x, k, up) = (rand(h * w * c), rand(9 * c * f), rand((h - 2) * (w - 2) * f));
            let run = |generic: bool| {
                let (mut dk, mut db, mut dx) = (vec![0.0; 9 * c * f], vec![0.0; f], vec![0.0; h * w * c]);
                if generic {
                    conv_backward_any(&x, &k, &up, &mut dk, &mut db, &mut dx, w, c, f);
                } else {
                    conv_backward_kernel(&x, &k, &up, &mut dk, &mut db, &mut dx, w, c, f);
                }
                [dk, db, dx]
            };
            for (a, b) in run(false).iter().zip(&run(true)) {
                for (p, q) in a.iter().zip(b) {
                    assert!((p - q).abs() < 1e-12, "c={c} f={f}: {p} vs {q}");
                }
            }
        }
    }

    #[test]
    fn conv_identity_kernel_crops_border() {
        let input = Tensor::new([4, 5, 1], (0..20).map(|v| v as f64).collect()).unwrap();
        let mut k = Tensor::zeros([3, 3, 1, 1]);
        k.data_mut()[4] = 1.0;
        let out = conv2d_valid(&input, &k, &Tensor::zeros([1])).unwrap();
        assert_eq!(out.shape(), &[2, 3, 1]);
        assert_eq!(out.data(), &[6.0, 7.0, 8.0, 11.0, 12.0, 13.0]);
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let k = Tensor::<f64>::zeros([3, 3, 2, 4]);
        let b = Tensor::zeros([4]);
        assert!(matches!(
            conv2d_valid(&Tensor::zeros([2, 5, 2]), &k, &b),
            Err(Error::TooSmall { .. })
        ));
        assert!(matches!(
            conv2d_valid(&Tensor::zeros([5, 5, 3]), &k, &b),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            conv2d_valid(&Tensor::zeros([5, 5, 2]), &k, &Tensor::zeros([3])),
            Err(Error::ShapeMismatch { .. })
        ));
        let up = Tensor::zeros([3, 3, 3]);
        assert!(conv2d_backward(&Tensor::zeros([5, 5, 2]), &k, &up).is_err());
    }

    #[test]
    fn conv_backward_zero_upstream_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = Tensor::new([5, 6, 2], (0..60).map(|_| rng.random::<f64>()).collect()).unwrap();
        let k = Tensor::new([3, 3, 2, 3], (0..54).map(|_| rng.random::<f64>()).collect()).unwrap();
        let g = conv2d_backward(&input, &k, &Tensor::zeros([3, 4, 3])).unwrap();
        assert!(g.d_input.data().iter().all(|&v| v == 0.0));
        assert!(g.d_params.iter().all(|p| p.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn conv_backward_kernel_grad_is_correlation() {
        // Constant input c with a delta kernel: every kernel tap sees the same
        // input value, so d_kernel[ky,kx] = c * Σ upstream and d_bias = Σ upstream.
        let input = Tensor::filled([5, 5, 1], 0.75);
        let mut k = Tensor::zeros([3, 3, 1, 1]);
        k.data_mut()[4] = 1.0;
        let up = t(&[3, 3, 1], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let g = conv2d_backward(&input, &k, &up).unwrap();
        assert!(g.d_params[0].data().iter().all(|&v| v == 0.75 * 45.0));
        assert_eq!(g.d_params[1].data(), &[45.0]);
        // delta kernel: d_input is upstream embedded in the interior
        assert_eq!(g.d_input.data()[6], 1.0);
        assert_eq!(g.d_input.data()[0], 0.0);
    }

    #[test]
    fn relu_examples() {
        let x = t(&[3], &[-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let pos = t(&[3], &[0.0, 0.5, 9.0]);
        assert_eq!(relu(&pos), pos);
        let g = relu_backward(&x, &t(&[3], &[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn maxpool_examples() {
        let p = maxpool_2x2(&t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        let p = maxpool_2x2(&Tensor::<f32>::zeros([57, 77, 8])).unwrap();
        assert_eq!(p.output.shape(), &[28, 38, 8]);
        let c = maxpool_2x2(&Tensor::<f64>::filled([6, 4, 2], 3.5)).unwrap();
        assert_eq!(c.output, Tensor::filled([3, 2, 2], 3.5));
        assert!(maxpool_2x2(&Tensor::<f64>::zeros([1, 4, 1])).is_err());
    }

    #[test]
    fn maxpool_ties_route_to_first_cell() {
        let x = t(&[2, 2, 1], &[5.0, 5.0, 5.0, 5.0]);
        let p = maxpool_2x2(&x).unwrap();
        let d = maxpool_backward(x.shape(), &p, &t(&[1, 1, 1], &[1.0])).unwrap();
        assert_eq!(d.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn dense_examples() {
        let x = t(&[3], &[1.0, -2.0, 3.0]);
        let mut eye = Tensor::zeros([3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        assert_eq!(dense(&x, &eye, &Tensor::zeros([3])).unwrap(), x);
        let params = 320 * 128 + 128;
        assert_eq!(params, 41_088);
        assert!(dense(&x, &Tensor::zeros([4, 2]), &Tensor::zeros([2])).is_err());
    }

    #[test]
    fn dropout_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::filled([10_000], 1.0);
        for mode in [Mode::Train, Mode::Infer] {
            assert_eq!(dropout(&x, 0.0, mode, &mut rng).unwrap().output, x);
        }
        assert_eq!(dropout(&x, 0.9, Mode::Infer, &mut rng).unwrap().output, x);
        let d = dropout(&x, 0.5, Mode::Train, &mut rng).unwrap();
        let mean = d.output.sum() / 10_000.0;
        assert!((0.95..=1.05).contains(&mean), "mean {mean}");
        assert!(matches!(
            dropout(&x, 1.0, Mode::Train, &mut rng),
            Err(Error::InvalidRate(_))
        ));
        assert!(dropout(&x, -0.1, Mode::Infer, &mut rng).is_err());
    }

    #[test]
    fn dropout_backward_applies_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::<f64>::filled([100], 2.0);
        let d = dropout(&x, 0.5, Mode::Train, &mut rng).unwrap();
        let g = dropout_backward(&d, &Tensor::filled([100], 1.0)).unwrap();
        for (o, gv) in d.output.data().iter().zip(g.data()) {
            assert_eq!(*o, 2.0 * gv);
        }
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&t(&[3], &[0.0, 0.0, 0.0])).unwrap();
        for &v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&t(&[3], &[core::f64::consts::LN_2, 0.0, 0.0])).unwrap();
        let want = [0.5, 0.25, 0.25];
        for (a, b) in p.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let z = t(&[4], &[0.3, -1.2, 2.0, 0.0]);
        let shifted = z.map(|v| v + 123.0);
        let (a, b) = (softmax(&z).unwrap(), softmax(&shifted).unwrap());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(softmax(&t(&[2], &[f64::NAN, 0.0])).is_err());
        assert!(softmax(&Tensor::<f64>::zeros([0])).is_err());
    }
}
