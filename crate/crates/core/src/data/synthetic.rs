//! Procedural test imagery: smooth gradients overlaid with antialiased
//! discs, bars and stripe patches. Deterministic in the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::{quantize, Image};

enum Shape {
    Disc {
        cx: f64,
        cy: f64,
        r: f64,
    },
    Bar {
        cx: f64,
        cy: f64,
        hw: f64,
        hh: f64,
    },
    Stripes {
        cx: f64,
        cy: f64,
        r: f64,
        period: f64,
        angle: f64,
    },
}

/// Signed coverage in [0, 1] of `shape` at pixel centre `(x, y)`.
fn coverage(shape: &Shape, x: f64, y: f64) -> f64 {
    let ramp = |d: f64| (0.5 - d).clamp(0.0, 1.0);
    match *shape {
        Shape::Disc { cx, cy, r } => ramp(((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - r),
        Shape::Bar { cx, cy, hw, hh } => ramp(((x - cx).abs() - hw).max((y - cy).abs() - hh)),
        Shape::Stripes {
            cx,
            cy,
            r,
            period,
            angle,
        } => {
            let inside = ramp(((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - r);
            let t = (x - cx) * angle.cos() + (y - cy) * angle.sin();
            let phase = (t / period).rem_euclid(1.0);
            inside * if phase < 0.5 { 1.0 } else { 0.0 }
        }
    }
}

pub fn synthetic_image(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(40.0..200.0));
    let grad: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-60.0..60.0));
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);

    let n_shapes = rng.gen_range(6..12);
    let mut shapes = Vec::with_capacity(n_shapes);
    for _ in 0..n_shapes {
        let cx = rng.gen_range(0.0..w);
        let cy = rng.gen_range(0.0..h);
        let size = rng.gen_range(0.06..0.3) * w.min(h);
        let shape = match rng.gen_range(0..3) {
            0 => Shape::Disc { cx, cy, r: size },
            1 => Shape::Bar {
                cx,
                cy,
                hw: size * rng.gen_range(0.2..1.0),
                hh: size * rng.gen_range(0.2..1.0),
            },
            _ => Shape::Stripes {
                cx,
                cy,
                r: size * 1.3,
                period: rng.gen_range(2.5..7.0),
                angle: rng.gen_range(0.0..std::f64::consts::PI),
            },
        };
        let colour: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..255.0));
        shapes.push((shape, colour));
    }

    Image::from_fn(width, height, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let t = ((px / w - 0.5) * angle.cos() + (py / h - 0.5) * angle.sin()) * 2.0;
        let mut rgb: [f64; 3] = std::array::from_fn(|c| base[c] + grad[c] * t);
        for (shape, colour) in &shapes {
            let a = coverage(shape, px, py);
            if a > 0.0 {
                for c in 0..3 {
                    rgb[c] = rgb[c] * (1.0 - a) + colour[c] * a;
                }
            }
        }
        rgb.map(quantize)
    })
    .expect("positive dimensions")
}
