use super::network::Model;
use crate::data::{resize_image, scaled_dims, Image};
use crate::error::{Error, Result};
use crate::geometry::Dihedral;
use crate::tensor::{Scalar, Tensor};

/// Averages `f` over the eight dihedral views of `x`, undoing each view on
/// the way out.
pub fn self_ensemble<T: Scalar>(
    x: &Tensor<T>,
    mut f: impl FnMut(&Tensor<T>) -> Result<Tensor<T>>,
) -> Result<Tensor<T>> {
    let mut acc: Option<Tensor<T>> = None;
    for d in Dihedral::all() {
        let y = f(&d.apply_tensor(x))?;
        let back = d.inverse().apply_tensor(&y);
        match &mut acc {
            Some(a) => a.add_assign(&back)?,
            None => acc = Some(back),
        }
    }
    let acc = acc.expect("eight views");
    Ok(acc.scale(T::one() / T::from_f64_lossy(8.0)))
}

impl<T: Scalar> Model<T> {
    pub fn self_ensemble_forward(&self, x: &Tensor<T>, factor: u32) -> Result<Tensor<T>> {
        self_ensemble(x, |v| self.forward(v, factor))
    }
}

pub fn super_resolve<T: Scalar>(model: &Model<T>, image: &Image, factor: u32, ensemble: bool) -> Result<Image> {
    let x = image.to_tensor::<T>();
    let y = if ensemble {
        model.self_ensemble_forward(&x, factor)?
    } else {
        model.forward(&x, factor)?
    };
    Image::from_tensor(&y, 0)
}

/// Non-integer scale `s`: run the network at the largest available integer
/// factor `f ≤ s`, then bicubic-resize to `round(s · dims)`.
pub fn super_resolve_fractional<T: Scalar>(
    model: &Model<T>,
    image: &Image,
    scale: f64,
    ensemble: bool,
) -> Result<Image> {
    if !scale.is_finite() || scale <= 1.0 {
        return Err(Error::contract(
            "super_resolve_fractional",
            format!("scale {scale} must exceed 1"),
        ));
    }
    let factor = model
        .config
        .sorted_factors()
        .into_iter()
        .filter(|&f| f64::from(f) <= scale)
        .max()
        .ok_or_else(|| Error::UnsupportedFactor {
            factor: scale.floor() as u32,
            available: model.config.sorted_factors(),
        })?;
    let sr = super_resolve(model, image, factor, ensemble)?;
    if f64::from(factor) == scale {
        return Ok(sr);
    }
    let (w, h) = scaled_dims(image.width(), image.height(), scale)?;
    resize_image(&sr, w, h, true)
}
