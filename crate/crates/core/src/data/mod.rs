//! Pixel-domain plumbing: image codecs, colour conversion, bicubic
//! degradation, dataset layout and patch augmentation.

mod dataset;
mod image;
mod resize;
pub mod synthetic;

pub use dataset::{
    augment, degrade, make_dataset, DatasetManifest, LrEntry, ManifestRecord, PairSet, Split, SrPair, MANIFEST_FILE,
};
pub use image::{
    decode_image, decode_png, decode_ppm, encode_png, encode_ppm, images_to_batch, load_image, save_image, Image, Plane,
};
pub use resize::{bicubic_resize, bicubic_resize_plane, cubic, resize_image, resize_plane, scaled_dims, KEYS_A};

/// Studio-swing BT.601 luma, kept real-valued:
/// `Y = 16 + (65.481 R + 128.553 G + 24.966 B) / 255`.
pub fn rgb_to_ycbcr_y(image: &Image) -> Plane {
    let data = image
        .data()
        .chunks(3)
        .map(|p| 16.0 + (65.481 * f64::from(p[0]) + 128.553 * f64::from(p[1]) + 24.966 * f64::from(p[2])) / 255.0)
        .collect();
    Plane::new(image.width(), image.height(), data).expect("one luma value per pixel")
}
