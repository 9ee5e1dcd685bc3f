//! Synthetic image corpora shared by the integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use debrisnet::data::manifest::{write_manifest, Sample, SampleManifest, Split};
use debrisnet::{Label, Rng};
use image::{Rgb, RgbImage};

pub const SIDE: u32 = 48;

/// Bright disc on a dark noisy background ("animal") or dark square on a
/// light noisy background ("litter"); `index` moves and resizes the shape.
pub fn synthetic_image(label: Label, index: u32, side: u32) -> RgbImage {
    let mut rng = Rng::new(u64::from(index) * 2 + label.as_u8() as u64);
    let s = side as f64;
    let cx = s * (0.4 + 0.2 * rng.unit_f64());
    let cy = s * (0.4 + 0.2 * rng.unit_f64());
    let r = s * (0.2 + 0.1 * rng.unit_f64());
    RgbImage::from_fn(side, side, |x, y| {
        let noise = (rng.unit_f64() * 24.0) as u8;
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        match label {
            Label::Animal if dx * dx + dy * dy <= r * r => Rgb([255 - noise, 255 - noise, 255 - noise]),
            Label::Animal => Rgb([20 + noise, 40 + noise, 60 + noise]),
            Label::Litter if dx.abs() <= r && dy.abs() <= r => Rgb([noise, noise, noise]),
            Label::Litter => Rgb([180 + noise, 190 + noise, 200 + noise]),
        }
    })
}

/// Writes `<root>/<dir>/<prefix><i>.png` for `i` in `0..n`.
pub fn write_class(root: &Path, dir: &str, label: Label, range: std::ops::Range<u32>) -> Vec<PathBuf> {
    let d = root.join(dir);
    fs::create_dir_all(&d).unwrap();
    range
        .map(|i| {
            let p = d.join(format!("img{i:03}.png"));
            synthetic_image(label, i, SIDE).save(&p).unwrap();
            p
        })
        .collect()
}

/// Directory corpus for `prepare`: `animals/`, `litter/` and `test/`.
pub fn write_corpus(root: &Path, animals: u32, litter: u32, test_each: u32) {
    write_class(root, "animals", Label::Animal, 0..animals);
    write_class(root, "litter", Label::Litter, 0..litter);
    if test_each > 0 {
        write_class(root, "test/animals", Label::Animal, 1000..1000 + test_each);
        write_class(root, "test/litter", Label::Litter, 1000..1000 + test_each);
    }
}

/// The 8-image overfit fixture: 4 + 4 train images, 2 + 2 validation
/// images and 2 + 2 test images, written under `root` with a manifest.
pub fn overfit_fixture(root: &Path) -> (SampleManifest, PathBuf) {
    let mut m = SampleManifest::new(0);
    for (label, dir) in [(Label::Animal, "animals"), (Label::Litter, "litter")] {
        for p in write_class(root, dir, label, 0..4) {
            m.push(Split::Train, Sample::original(p, label));
        }
        for p in write_class(root, &format!("val/{dir}"), label, 100..102) {
            m.push(Split::Val, Sample::original(p, label));
        }
        for p in write_class(root, &format!("test/{dir}"), label, 200..202) {
            m.push(Split::Test, Sample::original(p, label));
        }
    }
    let path = root.join("fixture.manifest");
    write_manifest(&m, &path).unwrap();
    (m, path)
}
