//! Stride-1 "same" convolution lowered to GEMM through im2col.
//!
//! Weights are `(out_c, in_c, k, k)`, biases `(out_c, 1, 1, 1)`.

use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

pub(crate) fn check_shapes(x: Shape, w: Shape, b: Shape) -> Result<usize> {
    let k = w.h;
    if w.w != k || k.is_multiple_of(2) {
        return Err(Error::contract(
            "conv2d",
            format!("kernel must be square with odd size, got {}x{}", w.h, w.w),
        ));
    }
    if x.c != w.c {
        return Err(Error::contract(
            "conv2d",
            format!("input has {} channels but weight expects in_c = {}", x.c, w.c),
        ));
    }
    if b != Shape::new(w.n, 1, 1, 1) {
        return Err(Error::contract(
            "conv2d",
            format!("bias shape {b} does not match out_c = {}", w.n),
        ));
    }
    Ok(k)
}

/// Unfolds one `(c, h, w)` sample into a `(c·k·k, h·w)` patch matrix.
fn im2col<T: Scalar>(src: &[T], c: usize, h: usize, w: usize, k: usize, col: &mut [T]) {
    let pad = k / 2;
    let hw = h * w;
    let mut row = 0;
    for ci in 0..c {
        let plane = &src[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let dst = &mut col[row * hw..(row + 1) * hw];
                let x_lo = pad.saturating_sub(kx).min(w);
                let x_hi = (w + pad).saturating_sub(kx).min(w).max(x_lo);
                for y in 0..h {
                    let out = &mut dst[y * w..(y + 1) * w];
                    let yy = y as isize + ky as isize - pad as isize;
                    if yy < 0 || yy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[yy as usize * w..(yy as usize + 1) * w];
                    out[..x_lo].fill(T::zero());
                    out[x_hi..].fill(T::zero());
                    if x_lo < x_hi {
                        let s0 = x_lo + kx - pad;
                        out[x_lo..x_hi].copy_from_slice(&src_row[s0..s0 + (x_hi - x_lo)]);
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch-matrix gradients back onto the sample.
fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, k: usize, dst: &mut [T]) {
    let pad = k / 2;
    let hw = h * w;
    let mut row = 0;
    for ci in 0..c {
        let plane = &mut dst[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let src = &col[row * hw..(row + 1) * hw];
                let x_lo = pad.saturating_sub(kx).min(w);
                let x_hi = (w + pad).saturating_sub(kx).min(w).max(x_lo);
                if x_lo >= x_hi {
                    row += 1;
                    continue;
                }
                let d0 = x_lo + kx - pad;
                for y in 0..h {
                    let yy = y as isize + ky as isize - pad as isize;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    let s = &src[y * w + x_lo..y * w + x_hi];
                    let base = yy as usize * w;
                    for (d, &g) in plane[base + d0..base + d0 + s.len()].iter_mut().zip(s) {
                        *d = *d + g;
                    }
                }
                row += 1;
            }
        }
    }
}

pub(crate) fn forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (xs, ws) = (x.shape(), w.shape());
    let k = check_shapes(xs, ws, b.shape())?;
    let (out_c, patch, hw) = (ws.n, ws.c * k * k, xs.plane());
    let out_shape = Shape::new(xs.n, out_c, xs.h, xs.w);
    let mut out = vec![T::zero(); out_shape.numel()];
    let mut col = if k == 1 {
        Vec::new()
    } else {
        vec![T::zero(); patch * hw]
    };
    let in_len = xs.c * hw;
    for n in 0..xs.n {
        let sample = &x.data()[n * in_len..(n + 1) * in_len];
        let dst = &mut out[n * out_c * hw..(n + 1) * out_c * hw];
        for (o, plane) in dst.chunks_mut(hw.max(1)).enumerate().take(out_c) {
            plane.fill(b.data()[o]);
        }
        let cols: &[T] = if k == 1 {
            sample
        } else {
            im2col(sample, xs.c, xs.h, xs.w, k, &mut col);
            &col
        };
        T::gemm(
            out_c,
            patch,
            hw,
            w.data(),
            (patch as isize, 1),
            cols,
            (hw as isize, 1),
            T::one(),
            dst,
            (hw as isize, 1),
        );
    }
    Tensor::from_vec(out_shape, out)
}

pub(crate) struct ConvGrads<T> {
    pub x: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub(crate) fn backward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, grad_out: &Tensor<T>, need: [bool; 3]) -> ConvGrads<T> {
    let (xs, ws) = (x.shape(), w.shape());
    let k = ws.h;
    let (out_c, patch, hw) = (ws.n, ws.c * k * k, xs.plane());
    let in_len = xs.c * hw;
    let [need_x, need_w, need_b] = need;

    let mut gx = need_x.then(|| vec![T::zero(); xs.numel()]);
    let mut gw = need_w.then(|| vec![T::zero(); ws.numel()]);
    let mut gb = need_b.then(|| vec![T::zero(); out_c]);
    let mut col = if k == 1 {
        Vec::new()
    } else {
        vec![T::zero(); patch * hw]
    };

    for n in 0..xs.n {
        let g = &grad_out.data()[n * out_c * hw..(n + 1) * out_c * hw];
        if let Some(gb) = gb.as_mut() {
            for (o, acc) in gb.iter_mut().enumerate() {
                *acc = *acc + g[o * hw..(o + 1) * hw].iter().copied().sum::<T>();
            }
        }
        if let Some(gw) = gw.as_mut() {
            let sample = &x.data()[n * in_len..(n + 1) * in_len];
            let cols: &[T] = if k == 1 {
                sample
            } else {
                im2col(sample, xs.c, xs.h, xs.w, k, &mut col);
                &col
            };
            // gw += g · colsᵀ
            T::gemm(
                out_c,
                hw,
                patch,
                g,
                (hw as isize, 1),
                cols,
                (1, hw as isize),
                T::one(),
                gw,
                (patch as isize, 1),
            );
        }
        if let Some(gx) = gx.as_mut() {
            let dst = &mut gx[n * in_len..(n + 1) * in_len];
            // grad cols = wᵀ · g
            if k == 1 {
                T::gemm(
                    patch,
                    out_c,
                    hw,
                    w.data(),
                    (1, patch as isize),
                    g,
                    (hw as isize, 1),
                    T::zero(),
                    dst,
                    (hw as isize, 1),
                );
            } else {
                T::gemm(
                    patch,
                    out_c,
                    hw,
                    w.data(),
                    (1, patch as isize),
                    g,
                    (hw as isize, 1),
                    T::zero(),
                    &mut col,
                    (hw as isize, 1),
                );
                col2im(&col, xs.c, xs.h, xs.w, k, dst);
            }
        }
    }

    let wrap = |data: Option<Vec<T>>, shape: Shape| {
        data.map(|d| Tensor::from_vec(shape, d).expect("gradient buffer sized from shape"))
    };
    ConvGrads {
        x: wrap(gx, xs),
        weight: wrap(gw, ws),
        bias: wrap(gb, Shape::new(out_c, 1, 1, 1)),
    }
}
