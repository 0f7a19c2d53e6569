use std::fs;

use mdcn::data::{
    augment, bicubic_resize, bicubic_resize_plane, cubic, decode_image, decode_png, decode_ppm, degrade, encode_png,
    encode_ppm, load_image, make_dataset, resize_image, rgb_to_ycbcr_y, save_image, synthetic::synthetic_image,
    DatasetManifest, Image, PairSet, Plane, Split,
};
use mdcn::geometry::Dihedral;
use mdcn::optim::{sample_batch, Batch, TrainConfig};
use mdcn::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn noise(w: usize, h: usize, seed: u64) -> Image {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, |_, _| rng.gen()).unwrap()
}

#[test]
fn ppm_round_trip_is_bitwise() {
    let img = noise(7, 5, 1);
    let bytes = encode_ppm(&img);
    assert_eq!(decode_ppm(&bytes).unwrap(), img);
    assert_eq!(encode_ppm(&decode_ppm(&bytes).unwrap()), bytes);
}

#[test]
fn png_to_ppm_to_png_preserves_samples() {
    let img = noise(9, 4, 2);
    let dir = tempfile::tempdir().unwrap();
    save_image(&img, dir.path().join("a.png")).unwrap();
    let a = load_image(dir.path().join("a.png")).unwrap();
    save_image(&a, dir.path().join("b.ppm")).unwrap();
    let b = load_image(dir.path().join("b.ppm")).unwrap();
    save_image(&b, dir.path().join("c.png")).unwrap();
    assert_eq!(load_image(dir.path().join("c.png")).unwrap(), img);
    assert_eq!(decode_png(&encode_png(&img).unwrap()).unwrap(), img);
}

#[test]
fn hand_written_ppm() {
    let mut bytes = b"P6\n2 2\n255\n".to_vec();
    let raster = [255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30];
    bytes.extend_from_slice(&raster);
    let img = decode_image(&bytes).unwrap();
    assert_eq!(img.data(), &raster);
    assert_eq!(img.pixel(0, 0), [255, 0, 0]);
    assert_eq!(img.pixel(1, 0), [0, 255, 0]);
    assert_eq!(img.pixel(0, 1), [0, 0, 255]);
    assert_eq!(img.pixel(1, 1), [10, 20, 30]);
}

#[test]
fn malformed_files_report_byte_offsets() {
    let cases: [(&[u8], usize); 4] = [
        (b"P6\n2 x\n255\n", 5),
        (b"P6\n1 1\n65535\n\0\0\0\0\0\0", 7),
        (b"P6\n2 2\n255\n\0\0\0", 14),
        (b"GIF89a", 0),
    ];
    for (bytes, offset) in cases {
        match decode_image(bytes) {
            Err(Error::Format { offset: o, .. }) => assert_eq!(o, offset, "{:?}", String::from_utf8_lossy(bytes)),
            other => panic!("expected a format error, got {other:?}"),
        }
    }
}

#[test]
fn sixteen_bit_png_is_rejected() {
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, 1, 1);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Sixteen);
        enc.write_header().unwrap().write_image_data(&[0; 6]).unwrap();
    }
    match decode_image(&bytes) {
        Err(Error::Format { offset, reason }) => {
            assert_eq!(offset, 24);
            assert!(reason.contains("16-bit"));
        }
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn luma_examples() {
    let y = |rgb| rgb_to_ycbcr_y(&Image::filled(1, 1, rgb).unwrap()).data[0];
    assert!((y([255, 255, 255]) - 235.0).abs() < 1e-3);
    assert_eq!(y([0, 0, 0]), 16.0);
    assert!((y([128, 128, 128]) - (16.0 + 219.0 * 128.0 / 255.0)).abs() < 1e-12);
}

#[test]
fn keys_kernel_values() {
    assert_eq!(cubic(0.0), 1.0);
    assert_eq!(cubic(1.0), 0.0);
    assert_eq!(cubic(2.0), 0.0);
    assert_eq!(cubic(2.5), 0.0);
    assert_eq!(cubic(0.5), 0.5625);
    assert_eq!(cubic(-1.5), -0.0625);
}

#[test]
fn constant_images_stay_constant() {
    let img = Image::filled(13, 9, [37, 200, 90]).unwrap();
    for scale in [0.25, 0.5, 1.0 / 3.0, 0.7, 1.0, 1.5, 2.0, 3.2, 4.0] {
        for antialias in [false, true] {
            let out = bicubic_resize(&img, scale, antialias).unwrap();
            assert!(out.data().chunks(3).all(|p| p == [37, 200, 90]), "scale {scale}");
        }
    }
    let plane = Plane::filled(10, 6, 0.3);
    let out = bicubic_resize_plane(&plane, 0.5, true).unwrap();
    assert!(out.data.iter().all(|v| (v - 0.3).abs() < 1e-12));
}

#[test]
fn unit_scale_is_identity() {
    let img = noise(11, 8, 3);
    assert_eq!(bicubic_resize(&img, 1.0, true).unwrap(), img);
    assert_eq!(resize_image(&img, 11, 8, false).unwrap(), img);
}

#[test]
fn empty_output_is_contract_error() {
    let img = noise(3, 3, 0);
    assert!(matches!(bicubic_resize(&img, 0.1, true), Err(Error::Contract { .. })));
    assert!(matches!(bicubic_resize(&img, -1.0, true), Err(Error::Contract { .. })));
}

#[test]
fn degrade_examples() {
    let (hr, lr) = degrade(&noise(48, 48, 4), 2).unwrap();
    assert_eq!((hr.width(), lr.width(), lr.height()), (48, 24, 24));

    let src = noise(49, 49, 5);
    let (hr, lr) = degrade(&src, 2).unwrap();
    assert_eq!((hr.width(), hr.height()), (48, 48));
    assert_eq!(hr, src.crop(0, 0, 48, 48).unwrap());
    assert_eq!((lr.width(), lr.height()), (24, 24));

    let flat = Image::filled(30, 21, [5, 128, 250]).unwrap();
    for f in [2, 3, 4] {
        let (hr, lr) = degrade(&flat, f).unwrap();
        assert!(lr.data().chunks(3).all(|p| p == [5, 128, 250]));
        let up = resize_image(&lr, hr.width(), hr.height(), true).unwrap();
        assert_eq!(up, hr);
    }

    let (hr, lr) = degrade(&noise(101, 77, 6), 4).unwrap();
    assert_eq!((hr.width(), hr.height(), lr.width(), lr.height()), (100, 76, 25, 19));

    assert!(matches!(degrade(&noise(2, 5, 0), 3), Err(Error::Data(_))));
}

#[test]
fn repeated_generators_return_to_start() {
    let pair = (noise(5, 3, 7), noise(2, 1, 8));
    let rot = Dihedral {
        flip: false,
        rotations: 1,
    };
    let flip = Dihedral {
        flip: true,
        rotations: 0,
    };
    let mut p = pair.clone();
    for _ in 0..4 {
        p = (p.0.transform(rot), p.1.transform(rot));
    }
    assert_eq!(p, pair);
    let twice = pair.0.transform(flip).transform(flip);
    assert_eq!(twice, pair.0);
}

/// The transforms act faithfully on an asymmetric 3×3 pattern and their
/// composition table closes over the eight elements.
#[test]
fn dihedral_group_closure() {
    let pattern = Image::from_fn(3, 3, |x, y| [(3 * y + x) as u8, 0, 0]).unwrap();
    let all = Dihedral::all();
    let images: Vec<Image> = all.iter().map(|&d| pattern.transform(d)).collect();
    for i in 0..8 {
        for j in 0..i {
            assert_ne!(images[i], images[j], "{:?} and {:?} coincide", all[i], all[j]);
        }
    }
    let mut table = [[0usize; 8]; 8];
    for (i, &a) in all.iter().enumerate() {
        for (j, &b) in all.iter().enumerate() {
            let composed = pattern.transform(a).transform(b);
            table[i][j] = images
                .iter()
                .position(|im| *im == composed)
                .expect("closed under composition");
        }
        assert_eq!(pattern.transform(a).transform(a.inverse()), pattern);
    }
    for (row, line) in table.iter().enumerate() {
        let mut r: Vec<usize> = line.to_vec();
        let mut c: Vec<usize> = (0..8).map(|i| table[i][row]).collect();
        r.sort_unstable();
        c.sort_unstable();
        assert_eq!(r, (0..8).collect::<Vec<_>>());
        assert_eq!(c, (0..8).collect::<Vec<_>>());
    }
    assert_eq!(table[0], [0, 1, 2, 3, 4, 5, 6, 7]);
    // rotations commute with each other but not with a flip
    assert_eq!(table[1][2], table[2][1]);
    assert_ne!(table[1][4], table[4][1]);
}

fn indexed_pair(lw: usize, lh: usize, f: usize) -> (Image, Image) {
    let code = |x: usize, y: usize| [x as u8, y as u8, 77];
    let lr = Image::from_fn(lw, lh, code).unwrap();
    let hr = Image::from_fn(lw * f, lh * f, |x, y| code(x / f, y / f)).unwrap();
    (hr, lr)
}

#[test]
fn augmentation_keeps_pairs_aligned() {
    for f in [2usize, 3, 4] {
        let (hr, lr) = indexed_pair(5, 3, f);
        let mut rng = ChaCha8Rng::seed_from_u64(f as u64);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            let (h, l, d) = augment(&hr, &lr, &mut rng);
            seen.insert(d);
            assert_eq!((h.width(), h.height()), (l.width() * f, l.height() * f));
            for y in 0..l.height() {
                for x in 0..l.width() {
                    for dy in 0..f {
                        for dx in 0..f {
                            assert_eq!(h.pixel(f * x + dx, f * y + dy), l.pixel(x, y));
                        }
                    }
                }
            }
        }
        assert_eq!(seen.len(), 8);
    }
}

fn write_images(dir: &std::path::Path) {
    for i in 0..5u64 {
        let img = synthetic_image(30 + 7 * i as usize, 26 + 3 * i as usize, i);
        let ext = if i % 2 == 0 { "png" } else { "ppm" };
        save_image(&img, dir.join(format!("img{i}.{ext}"))).unwrap();
    }
    save_image(&noise(101, 77, 9), dir.join("odd.png")).unwrap();
    fs::write(dir.join("notes.txt"), "ignored").unwrap();
}

#[test]
fn make_dataset_layout_and_split() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_images(src.path());
    let manifest = make_dataset(src.path(), out.path(), &[4, 2, 3], 2).unwrap();
    assert_eq!(manifest.factors, [2, 3, 4]);
    assert_eq!(manifest.records.len(), 6);
    assert_eq!(manifest.train_len(), 4);
    let val: Vec<&str> = manifest
        .records
        .iter()
        .filter(|r| r.split == Split::Val)
        .map(|r| r.name.as_str())
        .collect();
    assert_eq!(val, ["img4", "odd"]);
    assert_eq!(DatasetManifest::load(out.path()).unwrap(), manifest);
    for r in &manifest.records {
        let hr = load_image(out.path().join(&r.hr_path)).unwrap();
        assert_eq!((hr.width(), hr.height()), (r.hr_width, r.hr_height));
        for e in &r.lr {
            let f = e.factor as usize;
            assert_eq!(e.path, format!("LR_x{}/{}.png", f, r.name));
            let lr = load_image(out.path().join(&e.path)).unwrap();
            assert_eq!((lr.width(), lr.height()), (r.hr_width / f, r.hr_height / f));
            assert_eq!((e.hr_width, e.hr_height), (lr.width() * f, lr.height() * f));
        }
    }
    let odd = manifest.records.iter().find(|r| r.name == "odd").unwrap();
    let x4 = odd.lr_entry(4).unwrap();
    assert_eq!((x4.width, x4.height, x4.hr_width, x4.hr_height), (25, 19, 100, 76));

    let pairs = PairSet::load(out.path(), &manifest, Split::Train, &[2, 3]).unwrap();
    assert_eq!(pairs.get(3).unwrap().len(), 4);
    assert!(pairs.get(4).is_none());
}

#[test]
fn make_dataset_is_idempotent() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_images(src.path());
    let first = make_dataset(src.path(), out.path(), &[2], 1).unwrap();
    let snapshot = |p: &str| fs::read(out.path().join(p)).unwrap();
    let before: Vec<Vec<u8>> = ["manifest.json", "HR/img0.png", "LR_x2/odd.png"]
        .iter()
        .map(|p| snapshot(p))
        .collect();
    let second = make_dataset(src.path(), out.path(), &[2], 1).unwrap();
    let after: Vec<Vec<u8>> = ["manifest.json", "HR/img0.png", "LR_x2/odd.png"]
        .iter()
        .map(|p| snapshot(p))
        .collect();
    assert_eq!(first, second);
    assert_eq!(before, after);
}

#[test]
fn make_dataset_errors() {
    let empty = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    assert!(matches!(
        make_dataset(empty.path(), out.path(), &[2], 0),
        Err(Error::Data(_))
    ));
    let src = tempfile::tempdir().unwrap();
    write_images(src.path());
    assert!(matches!(
        make_dataset(src.path(), out.path(), &[2], 7),
        Err(Error::Config { .. })
    ));
    assert!(matches!(
        make_dataset(src.path(), out.path(), &[], 0),
        Err(Error::Config { .. })
    ));
}

#[test]
fn tampered_manifest_is_rejected() {
    let src = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_images(src.path());
    let mut manifest = make_dataset(src.path(), out.path(), &[3], 0).unwrap();
    manifest.records[0].lr[0].width += 1;
    assert!(matches!(manifest.validate(), Err(Error::Data(_))));
}

#[test]
fn seeded_sampling_repeats() {
    let images: Vec<(String, Image)> = (0..3).map(|i| (format!("{i}"), synthetic_image(40, 40, i))).collect();
    let pairs = PairSet::from_hr_images(&images, &[2, 3, 4]).unwrap();
    let cfg = TrainConfig {
        batch_size: 2,
        hr_patch: 24,
        ..TrainConfig::default()
    };
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..10)
            .map(|_| sample_batch::<f32, _>(&pairs, &cfg, &mut rng).unwrap())
            .collect::<Vec<Batch<f32>>>()
    };
    let (a, b) = (draw(5), draw(5));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.factor, &x.lr, &x.hr), (y.factor, &y.lr, &y.hr));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ppm_round_trip_any_size(w in 1usize..20, h in 1usize..20, seed in 0u64..1000) {
        let img = noise(w, h, seed);
        prop_assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img.clone());
        prop_assert_eq!(decode_png(&encode_png(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn degrade_dimension_relation(w in 4usize..60, h in 4usize..60, f in 2u32..5) {
        let (hr, lr) = degrade(&noise(w, h, 0), f).unwrap();
        let f = f as usize;
        prop_assert_eq!((lr.width(), lr.height()), (w / f, h / f));
        prop_assert_eq!((hr.width(), hr.height()), (f * (w / f), f * (h / f)));
    }

    #[test]
    fn transform_then_inverse_is_identity(i in 0usize..8, w in 1usize..7, h in 1usize..7) {
        let img = noise(w, h, i as u64);
        let d = Dihedral::from_index(i);
        prop_assert_eq!(img.transform(d).transform(d.inverse()), img);
    }
}
