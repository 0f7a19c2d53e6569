//! Metric formulas evaluated directly: dense 2-D Gaussian windows, no
//! separable shortcuts.

use mdcn::data::Image;

pub fn luma(img: &Image) -> Vec<f64> {
    let mut out = Vec::with_capacity(img.width() * img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let [r, g, b] = img.pixel(x, y);
            let (r, g, b) = (f64::from(r) / 255.0, f64::from(g) / 255.0, f64::from(b) / 255.0);
            out.push(16.0 + 65.481 * r + 128.553 * g + 24.966 * b);
        }
    }
    out
}

fn shaved(img: &Image, border: usize) -> (Vec<f64>, usize, usize) {
    let y = luma(img);
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::new();
    for r in border..h - border {
        for c in border..w - border {
            out.push(y[r * w + c]);
        }
    }
    (out, w - 2 * border, h - 2 * border)
}

pub fn mse(a: &Image, b: &Image, border: usize) -> f64 {
    let (ya, _, _) = shaved(a, border);
    let (yb, _, _) = shaved(b, border);
    ya.iter().zip(&yb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / ya.len() as f64
}

pub fn psnr(a: &Image, b: &Image, border: usize) -> f64 {
    let e = mse(a, b, border);
    if e == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / e).log10()
    }
}

pub fn rmse(a: &Image, b: &Image, border: usize) -> f64 {
    mse(a, b, border).sqrt()
}

pub fn ssim(a: &Image, b: &Image, border: usize) -> f64 {
    let (ya, w, h) = shaved(a, border);
    let (yb, _, _) = shaved(b, border);
    const WIN: usize = 11;
    let sigma = 1.5;
    let mut kernel = [[0.0; WIN]; WIN];
    let mut total = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, k) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *k = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
            total += *k;
        }
    }
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mut sum = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - WIN {
        for x0 in 0..=w - WIN {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..WIN {
                for j in 0..WIN {
                    let k = kernel[i][j] / total;
                    let p = ya[(y0 + i) * w + x0 + j];
                    let q = yb[(y0 + i) * w + x0 + j];
                    ma += k * p;
                    mb += k * q;
                    saa += k * p * p;
                    sbb += k * q * q;
                    sab += k * p * q;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}
