//! Fidelity metrics on the border-shaved luma plane.

use std::fmt;

use crate::data::{rgb_to_ycbcr_y, Image, Plane};
use crate::error::{Error, Result};

pub const PEAK: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct MetricReport {
    /// `f64::INFINITY` when the evaluated regions are identical.
    pub psnr_db: f64,
    pub ssim: f64,
    pub rmse: f64,
    pub shave: usize,
    pub pixels: usize,
}

impl MetricReport {
    pub fn compute(a: &Image, b: &Image, shave: usize) -> Result<Self> {
        let (ya, yb) = shaved_luma(a, b, shave)?;
        let rmse = mse(&ya, &yb).sqrt();
        Ok(MetricReport {
            psnr_db: psnr_from_rmse(rmse),
            ssim: ssim_planes(&ya, &yb)?,
            rmse,
            shave,
            pixels: ya.data.len(),
        })
    }
}

/// Formats a PSNR value, using `inf` for the identical-image sentinel.
pub struct Db(pub f64);

impl fmt::Display for Db {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{:.4}", self.0)
        }
    }
}

fn shaved_luma(a: &Image, b: &Image, shave: usize) -> Result<(Plane, Plane)> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::contract(
            "metrics",
            format!(
                "image sizes differ: {}x{} vs {}x{}",
                a.width(),
                a.height(),
                b.width(),
                b.height()
            ),
        ));
    }
    Ok((rgb_to_ycbcr_y(a).shave(shave)?, rgb_to_ycbcr_y(b).shave(shave)?))
}

fn mse(a: &Plane, b: &Plane) -> f64 {
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    sum / a.data.len() as f64
}

fn psnr_from_rmse(rmse: f64) -> f64 {
    if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * PEAK.log10() - 20.0 * rmse.log10()
    }
}

/// Y-channel PSNR in dB after shaving `shave` pixels from each border.
pub fn psnr(a: &Image, b: &Image, shave: usize) -> Result<f64> {
    let (ya, yb) = shaved_luma(a, b, shave)?;
    psnr_planes(&ya, &yb)
}

/// PSNR of two real-valued planes against the 8-bit peak.
pub fn psnr_planes(a: &Plane, b: &Plane) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::contract("psnr", "plane sizes differ"));
    }
    let m = mse(a, b);
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / m).log10()
    })
}

pub fn rmse(a: &Image, b: &Image, shave: usize) -> Result<f64> {
    let (ya, yb) = shaved_luma(a, b, shave)?;
    Ok(mse(&ya, &yb).sqrt())
}

/// Mean structural similarity of the shaved luma planes (11×11 Gaussian
/// window, σ = 1.5, valid positions only).
pub fn ssim(a: &Image, b: &Image, shave: usize) -> Result<f64> {
    let (ya, yb) = shaved_luma(a, b, shave)?;
    ssim_planes(&ya, &yb)
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = taps.iter().sum();
    taps.map(|t| t / total)
}

/// Separable valid-mode filtering with the normalised Gaussian window.
fn blur_valid(data: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = src[x..x + k].iter().zip(taps).map(|(v, t)| v * t).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (j, t) in taps.iter().enumerate() {
            let src = &rows[(y + j) * ow..(y + j + 1) * ow];
            for (d, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *d += s * t;
            }
        }
    }
    out
}

pub fn ssim_planes(a: &Plane, b: &Plane) -> Result<f64> {
    let (w, h) = (a.width, a.height);
    if (b.width, b.height) != (w, h) {
        return Err(Error::contract("ssim", "plane sizes differ"));
    }
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::contract(
            "ssim",
            format!("evaluated region {w}x{h} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let taps = gaussian_taps();
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };

    let mu_a = blur_valid(&a.data, w, h, &taps);
    let mu_b = blur_valid(&b.data, w, h, &taps);
    let e_aa = blur_valid(&prod(&a.data, &a.data), w, h, &taps);
    let e_bb = blur_valid(&prod(&b.data, &b.data), w, h, &taps);
    let e_ab = blur_valid(&prod(&a.data, &b.data), w, h, &taps);

    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
    }
    Ok(total / mu_a.len() as f64)
}
