mod common;

use std::collections::HashSet;
use std::fs;

use debrisnet::data::image::{decode_rgb, load_image, resize_bilinear};
use debrisnet::data::manifest::{Origin, Sample};
use debrisnet::data::prepare::{prepare, PrepareConfig};
use debrisnet::data::{augment_crop, read_manifest, write_manifest, CropRegion, Split};
use debrisnet::{Error, Label};
use image::{GrayImage, Luma, Rgb, RgbImage, Rgba, RgbaImage};

#[test]
fn same_size_image_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.png");
    let img = RgbImage::from_fn(140, 140, |x, y| Rgb([(x % 256) as u8, (y * 3 % 256) as u8, ((x + y) % 256) as u8]));
    img.save(&p).unwrap();
    let t = load_image(&p, 140).unwrap();
    assert_eq!(t.shape(), &[3, 140, 140]);
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            assert_eq!(t.data()[c * 140 * 140 + i], px[c] as f32 / 255.0);
        }
    }
}

#[test]
fn uniform_grey_stays_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("grey.png");
    RgbImage::from_pixel(280, 70, Rgb([128, 128, 128])).save(&p).unwrap();
    let t = load_image(&p, 140).unwrap();
    assert!(t.data().iter().all(|&v| v == 128.0 / 255.0));
}

#[test]
fn two_pixel_ramp_is_monotone_and_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("ramp.png");
    let mut img = RgbImage::new(2, 1);
    img.put_pixel(1, 0, Rgb([255, 255, 255]));
    img.save(&p).unwrap();
    let t = load_image(&p, 140).unwrap();
    let row: Vec<f32> = t.data()[..140].to_vec();
    assert!(row.windows(2).all(|w| w[0] <= w[1]));
    for x in 0..140 {
        assert!((row[x] + row[139 - x] - 1.0).abs() <= 1e-6);
    }
    // every row of every channel is the same ramp
    assert!(t.data().chunks(140).all(|r| r == row.as_slice()));
}

#[test]
fn alpha_is_dropped_and_grey_expands() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rgba.png");
    RgbaImage::from_pixel(4, 4, Rgba([10, 20, 30, 0])).save(&p).unwrap();
    let t = decode_rgb(&p).unwrap();
    assert_eq!(t.shape(), &[3, 4, 4]);
    assert_eq!(t.data()[0], 10.0 / 255.0);
    let g = dir.path().join("grey.png");
    GrayImage::from_pixel(3, 3, Luma([51])).save(&g).unwrap();
    assert!(decode_rgb(&g).unwrap().data().iter().all(|&v| v == 0.2));
}

#[test]
fn jpeg_decodes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.jpg");
    RgbImage::from_pixel(16, 8, Rgb([200, 100, 50])).save(&p).unwrap();
    let t = load_image(&p, 140).unwrap();
    assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn unreadable_inputs_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.png");
    fs::write(&p, b"definitely not an image").unwrap();
    assert!(matches!(load_image(&p, 140), Err(Error::Image { .. })));
    assert!(matches!(load_image(&dir.path().join("none.png"), 140), Err(Error::Io { .. })));
}

#[test]
fn crop_regions() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("src.png");
    common::synthetic_image(Label::Animal, 3, 96).save(&p).unwrap();
    let native = decode_rgb(&p).unwrap();
    let full = CropRegion { top: 0, left: 0, height: 96, width: 96 };
    assert_eq!(augment_crop(&native, full, 140).unwrap(), load_image(&p, 140).unwrap());
    let exact = CropRegion { top: 0, left: 0, height: 140, width: 140 };
    let big = resize_bilinear(&native, 200, 200).unwrap();
    let copy = augment_crop(&big, exact, 140).unwrap();
    assert_eq!(&copy.data()[..140], &big.data()[..140]);

    let a = Sample { path: p.clone(), label: Label::Animal, origin: Origin::Crop(CropRegion { top: 0, left: 0, height: 40, width: 40 }) };
    let b = Sample { path: p.clone(), label: Label::Animal, origin: Origin::Crop(CropRegion { top: 50, left: 50, height: 40, width: 40 }) };
    assert_ne!(a, b);
    assert_eq!(a.path, b.path);
    assert_ne!(a.load(140).unwrap(), b.load(140).unwrap());
    assert!(augment_crop(&native, CropRegion { top: 90, left: 0, height: 8, width: 8 }, 140).is_err());
    assert!(augment_crop(&native, CropRegion { top: 0, left: 0, height: 7, width: 30 }, 140).is_err());
}

#[test]
fn rotated_sample_loads_rotated() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.png");
    common::synthetic_image(Label::Litter, 1, 30).save(&p).unwrap();
    let orig = Sample::original(p.clone(), Label::Litter).load(20).unwrap();
    let half = Sample { origin: Origin::Rotate(2), ..Sample::original(p, Label::Litter) }.load(20).unwrap();
    // a half turn reverses every channel plane
    for c in 0..3 {
        let a = &orig.data()[c * 400..(c + 1) * 400];
        let b: Vec<f32> = half.data()[c * 400..(c + 1) * 400].iter().rev().copied().collect();
        assert_eq!(a, b.as_slice());
    }
}

#[test]
fn prepare_with_test_split_and_augmentation() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("corpus");
    common::write_corpus(&root, 12, 9, 2);
    let config = PrepareConfig { seed: 5, rotations: 3, crops: 2, val_fraction: 0.1 };
    let m = prepare(&root, &config).unwrap();
    let train_a = m.count(Split::Train, Label::Animal);
    assert_eq!(train_a, m.count(Split::Train, Label::Litter));
    assert_eq!(m.count(Split::Val, Label::Animal), m.count(Split::Val, Label::Litter));
    assert_eq!(m.count(Split::Test, Label::Animal), 2);
    assert_eq!(m.count(Split::Test, Label::Litter), 2);
    assert!(m.samples(Split::Test).iter().all(|s| s.origin == Origin::Original));
    let train: HashSet<_> = m.samples(Split::Train).iter().map(|s| s.path.clone()).collect();
    assert!(m.samples(Split::Val).iter().all(|s| !train.contains(&s.path)));
    // the litter class holds 9 * 6 samples; balancing trims animals to that
    assert_eq!(train_a + m.count(Split::Val, Label::Animal), 9 * 6);

    let out = dir.path().join("sub/m.manifest");
    fs::create_dir_all(out.parent().unwrap()).unwrap();
    write_manifest(&m, &out).unwrap();
    assert_eq!(read_manifest(&out).unwrap(), m);
    assert!(fs::read_to_string(&out).unwrap().contains("\t../corpus/"));
    let other = prepare(&root, &PrepareConfig { seed: 6, ..config }).unwrap();
    assert_ne!(other, m);
}

#[test]
fn prepare_rejects_empty_class() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("corpus");
    common::write_class(&root, "animals", Label::Animal, 0..3);
    fs::create_dir_all(root.join("litter")).unwrap();
    let err = prepare(&root, &PrepareConfig::default()).unwrap_err().to_string();
    assert!(err.contains("litter") && err.contains("no PNG or JPEG"), "{err}");
}

#[test]
fn prepare_rejects_tiny_class() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("corpus");
    common::write_corpus(&root, 1, 1, 0);
    let err = prepare(&root, &PrepareConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Dataset(_)), "{err}");
}
