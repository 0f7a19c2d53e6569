use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::{load_image, save_image, Image};
use super::resize::resize_image;
use crate::error::{Error, Result};
use crate::geometry::Dihedral;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Crops `hr` (top-left anchored) to a multiple of `factor` and shrinks it
/// by `factor` with antialiased bicubic resampling.
pub fn degrade(hr: &Image, factor: u32) -> Result<(Image, Image)> {
    let f = factor as usize;
    if f == 0 || hr.width() < f || hr.height() < f {
        return Err(Error::Data(format!(
            "{}x{} image is too small for x{factor} degradation",
            hr.width(),
            hr.height()
        )));
    }
    let (lw, lh) = (hr.width() / f, hr.height() / f);
    let cropped = hr.crop(0, 0, lw * f, lh * f)?;
    let lr = resize_image(&cropped, lw, lh, true)?;
    Ok((cropped, lr))
}

/// Applies one uniformly drawn dihedral transform to both members of a pair.
pub fn augment<R: Rng + ?Sized>(hr: &Image, lr: &Image, rng: &mut R) -> (Image, Image, Dihedral) {
    let d = Dihedral::from_index(rng.gen_range(0..8));
    (hr.transform(d), lr.transform(d), d)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrEntry {
    pub factor: u32,
    pub path: String,
    pub width: usize,
    pub height: usize,
    /// HR size after the divisibility crop for this factor.
    pub hr_width: usize,
    pub hr_height: usize,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub name: String,
    pub split: Split,
    pub hr_path: String,
    pub hr_width: usize,
    pub hr_height: usize,
    pub lr: Vec<LrEntry>,
}

impl ManifestRecord {
    pub fn lr_entry(&self, factor: u32) -> Option<&LrEntry> {
        self.lr.iter().find(|e| e.factor == factor)
    }
}

/// Index of an HR/LR dataset directory. Paths are relative to the directory.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub factors: Vec<u32>,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    /// Number of training pairs.
    pub fn train_len(&self) -> usize {
        self.records.iter().filter(|r| r.split == Split::Train).count()
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    /// Every LR entry must satisfy `lr = ⌊hr / f⌋` and `hr_crop = f · lr`.
    pub fn validate(&self) -> Result<()> {
        for r in &self.records {
            for &f in &self.factors {
                let e = r
                    .lr_entry(f)
                    .ok_or_else(|| Error::Data(format!("record {} has no x{f} entry", r.name)))?;
                let fu = f as usize;
                let ok = e.width == r.hr_width / fu
                    && e.height == r.hr_height / fu
                    && e.hr_width == e.width * fu
                    && e.hr_height == e.height * fu;
                if !ok {
                    return Err(Error::Data(format!(
                        "record {} violates the x{f} size relation ({}x{} -> {}x{})",
                        r.name, r.hr_width, r.hr_height, e.width, e.height
                    )));
                }
            }
        }
        Ok(())
    }

    /// Loads the cropped-HR / LR pairs of one split at one factor.
    pub fn load_pairs(&self, dir: impl AsRef<Path>, split: Split, factor: u32) -> Result<Vec<SrPair>> {
        let dir = dir.as_ref();
        self.records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| {
                let e = r
                    .lr_entry(factor)
                    .ok_or_else(|| Error::Data(format!("record {} has no x{factor} entry", r.name)))?;
                let hr = load_image(dir.join(&r.hr_path))?.crop(0, 0, e.hr_width, e.hr_height)?;
                let lr = load_image(dir.join(&e.path))?;
                if (lr.width(), lr.height()) != (e.width, e.height) {
                    return Err(Error::Data(format!("{} does not match its manifest size", e.path)));
                }
                Ok(SrPair {
                    name: r.name.clone(),
                    hr,
                    lr,
                })
            })
            .collect()
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SrPair {
    pub name: String,
    pub hr: Image,
    pub lr: Image,
}

/// Aligned pairs grouped by factor.
#[derive(Clone, Debug, Default)]
pub struct PairSet {
    pub pairs: BTreeMap<u32, Vec<SrPair>>,
}

impl PairSet {
    pub fn from_hr_images(images: &[(String, Image)], factors: &[u32]) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for &f in factors {
            let list = images
                .iter()
                .map(|(name, img)| {
                    let (hr, lr) = degrade(img, f)?;
                    Ok(SrPair {
                        name: name.clone(),
                        hr,
                        lr,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            pairs.insert(f, list);
        }
        Ok(PairSet { pairs })
    }

    pub fn load(dir: impl AsRef<Path>, manifest: &DatasetManifest, split: Split, factors: &[u32]) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for &f in factors {
            pairs.insert(f, manifest.load_pairs(dir.as_ref(), split, f)?);
        }
        Ok(PairSet { pairs })
    }

    pub fn get(&self, factor: u32) -> Option<&[SrPair]> {
        self.pairs.get(&factor).map(Vec::as_slice)
    }
}

fn hr_files(hr_dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(hr_dir).map_err(|e| Error::io(hr_dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(hr_dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "ppm")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Builds `out_dir/HR/<name>.png`, `out_dir/LR_x<f>/<name>.png` and the
/// manifest. The last `val_count` images (by file name) form the validation split.
pub fn make_dataset(
    hr_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    factors: &[u32],
    val_count: usize,
) -> Result<DatasetManifest> {
    let (hr_dir, out_dir) = (hr_dir.as_ref(), out_dir.as_ref());
    if factors.is_empty() {
        return Err(Error::config("factors", "at least one factor is required"));
    }
    let files = hr_files(hr_dir)?;
    if files.is_empty() {
        return Err(Error::Data(format!("no PNG or PPM images in {}", hr_dir.display())));
    }
    if val_count > files.len() {
        return Err(Error::config(
            "val_count",
            format!("{val_count} exceeds the {} available images", files.len()),
        ));
    }
    let mut factors = factors.to_vec();
    factors.sort_unstable();
    factors.dedup();

    let mut records = Vec::with_capacity(files.len());
    for (i, file) in files.iter().enumerate() {
        let name = file
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Data(format!("unusable file name {}", file.display())))?
            .to_string();
        let hr = load_image(file)?;
        let hr_path = format!("HR/{name}.png");
        save_image(&hr, out_dir.join(&hr_path))?;
        let mut lr_entries = Vec::with_capacity(factors.len());
        for &f in &factors {
            let (cropped, lr) = degrade(&hr, f)?;
            let path = format!("LR_x{f}/{name}.png");
            save_image(&lr, out_dir.join(&path))?;
            lr_entries.push(LrEntry {
                factor: f,
                path,
                width: lr.width(),
                height: lr.height(),
                hr_width: cropped.width(),
                hr_height: cropped.height(),
            });
        }
        records.push(ManifestRecord {
            name,
            split: if i + val_count >= files.len() {
                Split::Val
            } else {
                Split::Train
            },
            hr_path,
            hr_width: hr.width(),
            hr_height: hr.height(),
            lr: lr_entries,
        });
    }
    let manifest = DatasetManifest { factors, records };
    manifest.validate()?;
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
