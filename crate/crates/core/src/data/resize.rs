//! Separable cubic-convolution resampling (Keys kernel, a = −0.5).
//!
//! Output sample `i` sits at input coordinate `(i + 0.5) / scale − 0.5`.
//! When shrinking with antialiasing the kernel is stretched by `1 / scale`;
//! out-of-range taps are clamped to the border and the weights of every
//! output sample are normalised to sum to one.

use super::image::{Image, Plane};
use crate::error::{Error, Result};

pub const KEYS_A: f64 = -0.5;

pub fn cubic(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Taps `(input index, weight)` for each output sample along one axis.
fn axis_taps(in_len: usize, out_len: usize, antialias: bool) -> Vec<Vec<(usize, f64)>> {
    let scale = out_len as f64 / in_len as f64;
    let stretch = if antialias && scale < 1.0 { scale } else { 1.0 };
    let support = 2.0 / stretch;
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) / scale - 0.5;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut taps: Vec<(usize, f64)> = Vec::with_capacity((hi - lo + 1) as usize);
            for j in lo..=hi {
                let w = cubic((center - j as f64) * stretch) * stretch;
                if w == 0.0 {
                    continue;
                }
                let idx = j.clamp(0, in_len as isize - 1) as usize;
                match taps.last_mut() {
                    Some((last, acc)) if *last == idx => *acc += w,
                    _ => taps.push((idx, w)),
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Resamples a plane to exactly `out_w × out_h`.
pub fn resize_plane(p: &Plane, out_w: usize, out_h: usize, antialias: bool) -> Result<Plane> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::contract(
            "bicubic_resize",
            format!("output dimension {out_w}x{out_h} is empty"),
        ));
    }
    if p.width == 0 || p.height == 0 {
        return Err(Error::contract("bicubic_resize", "empty input plane"));
    }
    let xt = axis_taps(p.width, out_w, antialias);
    let yt = axis_taps(p.height, out_h, antialias);

    let mut rows = vec![0.0; out_w * p.height];
    for y in 0..p.height {
        let src = &p.data[y * p.width..(y + 1) * p.width];
        for (x, taps) in xt.iter().enumerate() {
            rows[y * out_w + x] = taps.iter().map(|&(j, w)| src[j] * w).sum();
        }
    }
    let mut out = vec![0.0; out_w * out_h];
    for (y, taps) in yt.iter().enumerate() {
        let dst = &mut out[y * out_w..(y + 1) * out_w];
        for &(j, w) in taps {
            let src = &rows[j * out_w..(j + 1) * out_w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s * w;
            }
        }
    }
    Plane::new(out_w, out_h, out)
}

/// Output size for a scale factor: `round(scale · dim)`.
pub fn scaled_dims(width: usize, height: usize, scale: f64) -> Result<(usize, usize)> {
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::contract(
            "bicubic_resize",
            format!("scale {scale} must be positive"),
        ));
    }
    let w = (width as f64 * scale).round() as usize;
    let h = (height as f64 * scale).round() as usize;
    if w == 0 || h == 0 {
        return Err(Error::contract(
            "bicubic_resize",
            format!("scaling {width}x{height} by {scale} leaves an empty image"),
        ));
    }
    Ok((w, h))
}

pub fn bicubic_resize_plane(p: &Plane, scale: f64, antialias: bool) -> Result<Plane> {
    let (w, h) = scaled_dims(p.width, p.height, scale)?;
    resize_plane(p, w, h, antialias)
}

pub fn resize_image(img: &Image, out_w: usize, out_h: usize, antialias: bool) -> Result<Image> {
    let planes = [0, 1, 2].map(|c| resize_plane(&img.channel(c), out_w, out_h, antialias));
    let [r, g, b] = planes;
    Image::from_planes(&[r?, g?, b?])
}

pub fn bicubic_resize(img: &Image, scale: f64, antialias: bool) -> Result<Image> {
    let (w, h) = scaled_dims(img.width(), img.height(), scale)?;
    resize_image(img, w, h, antialias)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_interpolates() {
        assert_eq!(cubic(0.0), 1.0);
        assert_eq!(cubic(1.0), 0.0);
        assert_eq!(cubic(2.0), 0.0);
        assert_eq!(cubic(-1.5), cubic(1.5));
    }

    #[test]
    fn taps_are_normalised() {
        for (i, o) in [(16, 8), (7, 21), (10, 3), (5, 5)] {
            for aa in [false, true] {
                for taps in axis_taps(i, o, aa) {
                    let s: f64 = taps.iter().map(|t| t.1).sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unit_scale_is_identity() {
        let p = Plane::new(4, 3, (0..12).map(|v| (v * v) as f64).collect()).unwrap();
        assert_eq!(bicubic_resize_plane(&p, 1.0, true).unwrap(), p);
    }

    #[test]
    fn constant_survives_any_scale() {
        let p = Plane::filled(9, 7, 42.5);
        for s in [0.25, 0.5, 1.0 / 3.0, 1.7, 3.2] {
            let r = bicubic_resize_plane(&p, s, true).unwrap();
            assert!(r.data.iter().all(|v| (v - 42.5).abs() < 1e-9), "scale {s}");
        }
    }

    #[test]
    fn empty_output_is_rejected() {
        let p = Plane::filled(2, 2, 1.0);
        assert!(bicubic_resize_plane(&p, 0.1, true).is_err());
    }
}
