//! Cubic resampling as an explicit dense matrix per axis.

fn keys(x: f64) -> f64 {
    let a = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// `out_len × in_len` weights. Source samples beyond the border repeat the
/// edge sample; rows are normalised.
pub fn resample_matrix(in_len: usize, out_len: usize, antialias: bool) -> Vec<Vec<f64>> {
    let scale = out_len as f64 / in_len as f64;
    let widen = if antialias && scale < 1.0 { 1.0 / scale } else { 1.0 };
    let reach = (2.0 * widen).ceil() as i64 + 2;
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) / scale - 0.5;
            let mut row = vec![0.0; in_len];
            let lo = center.floor() as i64 - reach;
            let hi = center.ceil() as i64 + reach;
            for j in lo..=hi {
                let wgt = keys((j as f64 - center) / widen);
                let src = j.clamp(0, in_len as i64 - 1) as usize;
                row[src] += wgt;
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect()
}

pub fn resample_1d(signal: &[f64], out_len: usize, antialias: bool) -> Vec<f64> {
    resample_matrix(signal.len(), out_len, antialias)
        .iter()
        .map(|row| row.iter().zip(signal).map(|(w, s)| w * s).sum())
        .collect()
}

/// Separable resize of a row-major `w × h` plane.
pub fn resample_2d(data: &[f64], w: usize, h: usize, ow: usize, oh: usize, antialias: bool) -> Vec<f64> {
    let mx = resample_matrix(w, ow, antialias);
    let my = resample_matrix(h, oh, antialias);
    let mut out = vec![0.0; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for y in 0..h {
                for x in 0..w {
                    acc += my[oy][y] * mx[ox][x] * data[y * w + x];
                }
            }
            out[oy * ow + ox] = acc;
        }
    }
    out
}
