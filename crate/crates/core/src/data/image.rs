use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Dihedral;
use crate::tensor::{Scalar, Tensor};

/// 8-bit RGB raster, row-major with interleaved samples.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Real-valued single-channel raster.
#[derive(Clone, PartialEq, Debug)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::contract(
                "plane",
                format!(
                    "{width}x{height} plane needs {} values, got {}",
                    width * height,
                    data.len()
                ),
            ));
        }
        Ok(Plane { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Drops `border` pixels from every side.
    pub fn shave(&self, border: usize) -> Result<Plane> {
        if 2 * border >= self.width || 2 * border >= self.height {
            return Err(Error::contract(
                "shave",
                format!("cannot shave {border} px from a {}x{} plane", self.width, self.height),
            ));
        }
        let (w, h) = (self.width - 2 * border, self.height - 2 * border);
        let mut data = Vec::with_capacity(w * h);
        for y in border..border + h {
            data.extend_from_slice(&self.data[y * self.width + border..y * self.width + border + w]);
        }
        Plane::new(w, h, data)
    }
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract("image", format!("empty image {width}x{height}")));
        }
        if data.len() != 3 * width * height {
            return Err(Error::contract(
                "image",
                format!(
                    "{width}x{height} RGB image needs {} samples, got {}",
                    3 * width * height,
                    data.len()
                ),
            ));
        }
        Ok(Image { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Image::new(width, height, rgb.repeat(width * height))
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Image::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Image> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::contract(
                "crop",
                format!(
                    "window {width}x{height}+{x0}+{y0} exceeds {}x{} image",
                    self.width, self.height
                ),
            ));
        }
        let mut data = Vec::with_capacity(3 * width * height);
        for y in y0..y0 + height {
            let row = 3 * (y * self.width + x0);
            data.extend_from_slice(&self.data[row..row + 3 * width]);
        }
        Image::new(width, height, data)
    }

    pub fn transform(&self, d: Dihedral) -> Image {
        let (h, w) = d.output_dims(self.height, self.width);
        Image {
            width: w,
            height: h,
            data: d.apply_interleaved(&self.data, self.height, self.width, 3),
        }
    }

    /// Channel `c` as a real-valued plane.
    pub fn channel(&self, c: usize) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).map(|&v| f64::from(v)).collect(),
        }
    }

    /// Rounds and clamps three planes into an image.
    pub fn from_planes(planes: &[Plane; 3]) -> Result<Image> {
        let (w, h) = (planes[0].width, planes[0].height);
        if planes.iter().any(|p| p.width != w || p.height != h) {
            return Err(Error::contract("from_planes", "planes differ in size"));
        }
        let mut data = Vec::with_capacity(3 * w * h);
        for i in 0..w * h {
            for p in planes {
                data.push(quantize(p.data[i]));
            }
        }
        Image::new(w, h, data)
    }

    /// `(1, 3, h, w)` tensor with samples scaled to `[0, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let scale = 1.0 / 255.0;
        Tensor::from_fn([1, 3, self.height, self.width], |[_, c, y, x]| {
            T::from_f64_lossy(f64::from(self.data[3 * (y * self.width + x) + c]) * scale)
        })
    }

    /// Inverse of [`Image::to_tensor`] for batch item `n`; values are clamped to `[0, 255]`.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, n: usize) -> Result<Image> {
        let s = t.shape();
        if s.c != 3 || n >= s.n {
            return Err(Error::contract(
                "from_tensor",
                format!("expected an RGB batch with item {n}, got shape {s}"),
            ));
        }
        let mut data = Vec::with_capacity(3 * s.h * s.w);
        for y in 0..s.h {
            for x in 0..s.w {
                for c in 0..3 {
                    data.push(quantize(t.at(n, c, y, x).as_f64() * 255.0));
                }
            }
        }
        Image::new(s.w, s.h, data)
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        v.round().clamp(0.0, 255.0) as u8
    }
}

/// Stacks images of equal size into an `(n, 3, h, w)` batch.
pub fn images_to_batch<T: Scalar>(images: &[Image]) -> Result<Tensor<T>> {
    let tensors: Vec<Tensor<T>> = images.iter().map(Image::to_tensor).collect();
    let batch = Tensor::stack(&tensors)?;
    debug_assert_eq!(batch.shape().c, 3);
    Ok(batch)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes PNG or binary PPM, detected from the leading bytes.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)
    } else {
        Err(Error::Format {
            offset: 0,
            reason: "unrecognised signature (expected PNG or binary PPM)".into(),
        })
    }
}

/// Encoding is chosen from the file extension: `.png` or `.ppm`.
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let bytes = match ext.as_deref() {
        Some("png") => encode_png(image)?,
        Some("ppm") => encode_ppm(image),
        _ => {
            return Err(Error::Data(format!(
                "cannot infer image format from {}",
                path.display()
            )))
        }
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format {
                offset: pos,
                reason: format!("expected {} in PPM header", ["width", "height", "maxval"][i]),
            });
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format {
                offset: start,
                reason: "header number out of range".into(),
            })?;
        if i == 2 && *field != 255 {
            return Err(Error::Format {
                offset: start,
                reason: format!("unsupported bit depth: maxval {} (only 255 is supported)", *field),
            });
        }
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format {
            offset: pos,
            reason: "expected a single whitespace byte before the raster".into(),
        });
    }
    pos += 1;
    let [width, height, _] = fields;
    if width == 0 || height == 0 {
        return Err(Error::Format {
            offset: 3,
            reason: format!("empty image {width}x{height}"),
        });
    }
    let len = 3 * width * height;
    if bytes.len() < pos + len {
        return Err(Error::Format {
            offset: bytes.len(),
            reason: format!("raster truncated: need {len} bytes after offset {pos}"),
        });
    }
    Image::new(width, height, bytes[pos..pos + len].to_vec())
}

pub fn encode_png(image: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let png_err = |e: png::EncodingError| Error::Data(format!("PNG encoding failed: {e}"));
    {
        let mut encoder = png::Encoder::new(&mut out, image.width as u32, image.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(png_err)?;
        writer.write_image_data(&image.data).map_err(png_err)?;
    }
    Ok(out)
}

// Byte offset of the bit-depth field: signature (8) + chunk length (4) + "IHDR" (4) + width (4) + height (4).
const PNG_BIT_DEPTH_OFFSET: usize = 24;

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let fmt = |reason: String| Error::Format { offset: 0, reason };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| fmt(format!("invalid PNG: {e}")))?;
    let depth = reader.info().bit_depth;
    if depth == png::BitDepth::Sixteen {
        return Err(Error::Format {
            offset: PNG_BIT_DEPTH_OFFSET,
            reason: "unsupported bit depth: 16-bit PNG".into(),
        });
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| fmt("PNG dimensions overflow".into()))?;
    let mut buf = vec![0; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| fmt(format!("invalid PNG data: {e}")))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let raw = &buf[..frame.buffer_size()];
    let data = match frame.color_type {
        png::ColorType::Rgb => raw.to_vec(),
        png::ColorType::Rgba => raw.chunks(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => raw.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => raw.chunks(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        png::ColorType::Indexed => return Err(fmt("palette was not expanded".into())),
    };
    Image::new(w, h, data)
}
