use super::{ensure_same_shape, Scalar, Shape, Tensor};
use crate::error::{Error, Result};

pub(crate) fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub(crate) fn relu_backward<T: Scalar>(x: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    x.zip_map(g, |v, g| if v > T::zero() { g } else { T::zero() })
        .expect("relu grad has input shape")
}

pub(crate) fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Uses the forward output `y`: dσ/dx = y (1 − y).
pub(crate) fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    y.zip_map(g, |y, g| g * y * (T::one() - y))
        .expect("sigmoid grad has output shape")
}

pub(crate) fn add<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    ensure_same_shape("add", x.shape(), y.shape())?;
    x.zip_map(y, |a, b| a + b)
}

pub(crate) fn concat_channels<T: Scalar>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs
        .first()
        .ok_or_else(|| Error::contract("concat_channels", "empty input list"))?
        .shape();
    for t in xs {
        let s = t.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(Error::contract(
                "concat_channels",
                format!("batch/spatial mismatch {s} vs {first}"),
            ));
        }
    }
    let c_total: usize = xs.iter().map(|t| t.shape().c).sum();
    let plane = first.plane();
    let mut out = Vec::with_capacity(first.n * c_total * plane);
    for n in 0..first.n {
        for t in xs {
            let len = t.shape().c * plane;
            out.extend_from_slice(&t.data()[n * len..(n + 1) * len]);
        }
    }
    Tensor::from_vec(Shape::new(first.n, c_total, first.h, first.w), out)
}

/// Splits a channel-concatenated gradient back into per-input pieces.
pub(crate) fn split_channels<T: Scalar>(g: &Tensor<T>, channels: &[usize]) -> Vec<Tensor<T>> {
    let s = g.shape();
    let plane = s.plane();
    let mut parts: Vec<Vec<T>> = channels.iter().map(|&c| Vec::with_capacity(s.n * c * plane)).collect();
    for n in 0..s.n {
        let mut offset = n * s.c * plane;
        for (part, &c) in parts.iter_mut().zip(channels) {
            part.extend_from_slice(&g.data()[offset..offset + c * plane]);
            offset += c * plane;
        }
    }
    parts
        .into_iter()
        .zip(channels)
        .map(|(d, &c)| Tensor::from_vec(Shape::new(s.n, c, s.h, s.w), d).expect("split sizes"))
        .collect()
}

pub(crate) fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    let plane = s.plane();
    if plane == 0 {
        return Err(Error::contract("global_avg_pool", format!("zero spatial size in {s}")));
    }
    let inv = T::one() / T::from_usize(plane).expect("plane size");
    let data = x
        .data()
        .chunks(plane)
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), data)
}

pub(crate) fn global_avg_pool_backward<T: Scalar>(input: Shape, g: &Tensor<T>) -> Tensor<T> {
    let plane = input.plane();
    let inv = T::one() / T::from_usize(plane).expect("plane size");
    let mut out = Vec::with_capacity(input.numel());
    for &gv in g.data() {
        out.extend(std::iter::repeat_n(gv * inv, plane));
    }
    Tensor::from_vec(input, out).expect("pool grad sized from input")
}

pub(crate) fn check_scale_shapes(x: Shape, s: Shape) -> Result<()> {
    if s != Shape::new(x.n, x.c, 1, 1) {
        return Err(Error::contract(
            "scale_channels",
            format!("scale shape {s} does not match ({}, {}, 1, 1)", x.n, x.c),
        ));
    }
    Ok(())
}

pub(crate) fn scale_channels<T: Scalar>(x: &Tensor<T>, s: &Tensor<T>) -> Result<Tensor<T>> {
    check_scale_shapes(x.shape(), s.shape())?;
    let plane = x.shape().plane();
    let mut out = x.data().to_vec();
    for (chunk, &k) in out.chunks_mut(plane.max(1)).zip(s.data()) {
        chunk.iter_mut().for_each(|v| *v = *v * k);
    }
    Tensor::from_vec(x.shape(), out)
}

pub(crate) fn scale_channels_backward<T: Scalar>(
    x: &Tensor<T>,
    s: &Tensor<T>,
    g: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let plane = x.shape().plane().max(1);
    let gx = scale_channels(g, s).expect("same shapes as forward");
    let gs = x
        .data()
        .chunks(plane)
        .zip(g.data().chunks(plane))
        .map(|(xc, gc)| xc.iter().zip(gc).map(|(&a, &b)| a * b).sum())
        .collect();
    (gx, Tensor::from_vec(s.shape(), gs).expect("scale grad"))
}

/// Sub-pixel rearrangement: `out(n, c, r·y+dy, r·x+dx) = in(n, c·r² + dy·r + dx, y, x)`.
pub fn pixel_shuffle<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || !s.c.is_multiple_of(r * r) {
        return Err(Error::contract(
            "pixel_shuffle",
            format!("{} channels are not divisible by r² = {}", s.c, r * r),
        ));
    }
    let oc = s.c / (r * r);
    let out_shape = Shape::new(s.n, oc, s.h * r, s.w * r);
    let mut out = vec![T::zero(); out_shape.numel()];
    for n in 0..s.n {
        for c in 0..oc {
            for dy in 0..r {
                for dx in 0..r {
                    let ic = c * r * r + dy * r + dx;
                    for y in 0..s.h {
                        for xx in 0..s.w {
                            out[out_shape.index(n, c, r * y + dy, r * xx + dx)] = x.data()[s.index(n, ic, y, xx)];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}

/// Inverse of [`pixel_shuffle`].
pub fn space_to_depth<T: Scalar>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || !s.h.is_multiple_of(r) || !s.w.is_multiple_of(r) {
        return Err(Error::contract(
            "space_to_depth",
            format!("spatial size {}x{} is not divisible by {r}", s.h, s.w),
        ));
    }
    let out_shape = Shape::new(s.n, s.c * r * r, s.h / r, s.w / r);
    let mut out = vec![T::zero(); out_shape.numel()];
    for n in 0..s.n {
        for c in 0..s.c {
            for dy in 0..r {
                for dx in 0..r {
                    let oc = c * r * r + dy * r + dx;
                    for y in 0..out_shape.h {
                        for xx in 0..out_shape.w {
                            out[out_shape.index(n, oc, y, xx)] = x.data()[s.index(n, c, r * y + dy, r * xx + dx)];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}

pub(crate) fn l1_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    ensure_same_shape("l1_loss", pred.shape(), target.shape())?;
    let n = T::from_usize(pred.numel().max(1)).expect("numel");
    let total: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t).abs())
        .sum();
    Ok(Tensor::scalar(total / n))
}

/// Subgradient sign(pred − target) / numel, zero on exact ties.
pub(crate) fn l1_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, g: T) -> Tensor<T> {
    let k = g / T::from_usize(pred.numel().max(1)).expect("numel");
    pred.zip_map(target, |p, t| {
        if p > t {
            k
        } else if p < t {
            -k
        } else {
            T::zero()
        }
    })
    .expect("same shapes as forward")
}

pub(crate) fn mean<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.numel() == 0 {
        return Err(Error::contract("mean", "empty tensor"));
    }
    Ok(Tensor::scalar(x.sum() / T::from_usize(x.numel()).expect("numel")))
}
