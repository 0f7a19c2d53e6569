//! Loop-based double-precision primitives. Deliberately naive: every output
//! element is computed from its defining formula.
#![allow(clippy::needless_range_loop)]

use mdcn::tensor::{Scalar, Tensor};

/// Row-major `(n, c, h, w)` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Arr {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Arr {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Arr {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Self {
        let [n, c, h, w] = t.shape().dims();
        Arr {
            n,
            c,
            h,
            w,
            data: t.data().iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_vec(
            [self.n, self.c, self.h, self.w],
            self.data.iter().map(|&v| T::from_f64_lossy(v)).collect(),
        )
        .expect("consistent dims")
    }

    fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(n, c, y, x);
        self.data[i] = v;
    }
}

/// Stride-1 convolution with zero padding `(k − 1) / 2`; `w` is `(out, in, k, k)`.
pub fn conv(x: &Arr, w: &Arr, b: &[f64]) -> Arr {
    assert_eq!(x.c, w.c, "conv input channels");
    assert_eq!(w.h, w.w);
    let k = w.h;
    let pad = (k as isize - 1) / 2;
    let mut out = Arr::zeros(x.n, w.n, x.h, x.w);
    for n in 0..x.n {
        for o in 0..w.n {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let mut acc = b[o];
                    for i in 0..x.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - pad;
                                let sx = xx as isize + kx as isize - pad;
                                if sy < 0 || sx < 0 || sy >= x.h as isize || sx >= x.w as isize {
                                    continue;
                                }
                                acc += w.get(o, i, ky, kx) * x.get(n, i, sy as usize, sx as usize);
                            }
                        }
                    }
                    out.set(n, o, y, xx, acc);
                }
            }
        }
    }
    out
}

fn map(x: &Arr, f: impl Fn(f64) -> f64) -> Arr {
    Arr {
        data: x.data.iter().map(|&v| f(v)).collect(),
        ..x.clone()
    }
}

pub fn relu(x: &Arr) -> Arr {
    map(x, |v| if v > 0.0 { v } else { 0.0 })
}

pub fn sigmoid(x: &Arr) -> Arr {
    map(x, |v| 1.0 / (1.0 + (-v).exp()))
}

pub fn add(a: &Arr, b: &Arr) -> Arr {
    assert_eq!((a.n, a.c, a.h, a.w), (b.n, b.c, b.h, b.w));
    Arr {
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
        ..a.clone()
    }
}

pub fn concat(xs: &[&Arr]) -> Arr {
    let c: usize = xs.iter().map(|a| a.c).sum();
    let (n, h, w) = (xs[0].n, xs[0].h, xs[0].w);
    let mut out = Arr::zeros(n, c, h, w);
    for b in 0..n {
        let mut base = 0;
        for a in xs {
            for ch in 0..a.c {
                for y in 0..h {
                    for x in 0..w {
                        out.set(b, base + ch, y, x, a.get(b, ch, y, x));
                    }
                }
            }
            base += a.c;
        }
    }
    out
}

pub fn global_avg_pool(x: &Arr) -> Arr {
    let mut out = Arr::zeros(x.n, x.c, 1, 1);
    for n in 0..x.n {
        for c in 0..x.c {
            let mut s = 0.0;
            for y in 0..x.h {
                for xx in 0..x.w {
                    s += x.get(n, c, y, xx);
                }
            }
            out.set(n, c, 0, 0, s / (x.h * x.w) as f64);
        }
    }
    out
}

pub fn scale_channels(x: &Arr, s: &Arr) -> Arr {
    let mut out = x.clone();
    for n in 0..x.n {
        for c in 0..x.c {
            for y in 0..x.h {
                for xx in 0..x.w {
                    out.set(n, c, y, xx, x.get(n, c, y, xx) * s.get(n, c, 0, 0));
                }
            }
        }
    }
    out
}

/// `out(n, c, r·y + dy, r·x + dx) = in(n, c·r² + dy·r + dx, y, x)`
pub fn pixel_shuffle(x: &Arr, r: usize) -> Arr {
    let c = x.c / (r * r);
    let mut out = Arr::zeros(x.n, c, x.h * r, x.w * r);
    for n in 0..x.n {
        for ch in 0..c {
            for y in 0..x.h {
                for xx in 0..x.w {
                    for dy in 0..r {
                        for dx in 0..r {
                            let v = x.get(n, ch * r * r + dy * r + dx, y, xx);
                            out.set(n, ch, r * y + dy, r * xx + dx, v);
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn l1(a: &Arr, b: &Arr) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len() as f64
}
