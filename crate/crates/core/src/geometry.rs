//! The eight symmetries of the square (dihedral group D4) acting on 2-D grids.

use crate::tensor::{Scalar, Shape, Tensor};

/// Optional horizontal flip followed by `rotations` quarter turns counter-clockwise.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub struct Dihedral {
    pub flip: bool,
    pub rotations: u8,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral {
        flip: false,
        rotations: 0,
    };

    /// All eight elements, identity first.
    pub fn all() -> [Dihedral; 8] {
        let mut out = [Dihedral::IDENTITY; 8];
        for (i, d) in out.iter_mut().enumerate() {
            *d = Dihedral {
                flip: i >= 4,
                rotations: (i % 4) as u8,
            };
        }
        out
    }

    pub fn from_index(i: usize) -> Dihedral {
        Dihedral::all()[i % 8]
    }

    pub fn inverse(self) -> Dihedral {
        if self.flip {
            // (R^k F)^-1 = F R^-k = R^k F
            self
        } else {
            Dihedral {
                flip: false,
                rotations: (4 - self.rotations % 4) % 4,
            }
        }
    }

    pub fn swaps_axes(self) -> bool {
        self.rotations % 2 == 1
    }

    /// Output `(height, width)` for an input of `(h, w)`.
    pub fn output_dims(self, h: usize, w: usize) -> (usize, usize) {
        if self.swaps_axes() {
            (w, h)
        } else {
            (h, w)
        }
    }

    /// Where input pixel `(y, x)` of an `h × w` grid lands in the output.
    pub fn map_point(self, h: usize, w: usize, y: usize, x: usize) -> (usize, usize) {
        let (mut y, mut x, mut h, mut w) = (y, x, h, w);
        if self.flip {
            x = w - 1 - x;
        }
        for _ in 0..self.rotations % 4 {
            // quarter turn counter-clockwise: (y, x) -> (w - 1 - x, y)
            (y, x) = (w - 1 - x, y);
            (h, w) = (w, h);
        }
        let _ = h;
        (y, x)
    }

    /// Applies the transform to a row-major `h × w` grid of `channels`
    /// interleaved values per pixel.
    pub fn apply_interleaved<V: Copy>(self, data: &[V], h: usize, w: usize, channels: usize) -> Vec<V> {
        assert_eq!(data.len(), h * w * channels);
        let (_, ow) = self.output_dims(h, w);
        let mut out = data.to_vec();
        for y in 0..h {
            for x in 0..w {
                let (oy, ox) = self.map_point(h, w, y, x);
                let (src, dst) = ((y * w + x) * channels, (oy * ow + ox) * channels);
                out[dst..dst + channels].copy_from_slice(&data[src..src + channels]);
            }
        }
        out
    }

    /// Applies the transform to every spatial plane of a tensor.
    pub fn apply_tensor<T: Scalar>(self, t: &Tensor<T>) -> Tensor<T> {
        let s = t.shape();
        let (oh, ow) = self.output_dims(s.h, s.w);
        let mut out = Vec::with_capacity(s.numel());
        for plane in t.data().chunks(s.plane().max(1)) {
            out.extend(self.apply_interleaved(plane, s.h, s.w, 1));
        }
        Tensor::from_vec(Shape::new(s.n, s.c, oh, ow), out).expect("dihedral keeps element count")
    }
}
