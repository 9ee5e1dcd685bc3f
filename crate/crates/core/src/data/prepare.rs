//! Directory ingestion and the full prepare pipeline:
//! ingest, augment, balance, split.
//!
//! All randomness comes from one [`Rng`] seeded with `PrepareConfig::seed`,
//! consumed in this order: crop regions (files in sorted order), balancing,
//! then the split shuffle.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::image::{image_dimensions, CropRegion, MIN_CROP};
use crate::data::manifest::{Origin, Sample, SampleManifest, Split};
use crate::data::split::{balance_classes, split_train_val};
use crate::error::{Error, Result};
use crate::loss::Label;
use crate::rng::Rng;

pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Crop sides are drawn from this fraction of the source side.
const CROP_FRACTION: (f64, f64) = (0.6, 0.9);
const CROP_ATTEMPTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareConfig {
    pub seed: u64,
    /// Quarter turns generated per image: rotations 1..=n, n in 0..=3.
    pub rotations: u8,
    /// Random crops generated per image.
    pub crops: usize,
    pub val_fraction: f64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rotations: 0,
            crops: 0,
            val_fraction: 0.1,
        }
    }
}

fn class_dir(label: Label) -> &'static str {
    match label {
        Label::Animal => "animals",
        Label::Litter => "litter",
    }
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Image files directly inside `dir`, sorted by path.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Dataset(format!(
            "missing directory {}",
            dir.display()
        )));
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && has_image_extension(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Files of one class with their `(width, height)`. Every file's header is
/// checked; all failures are reported together.
fn ingest_class(dir: &Path) -> Result<Vec<(PathBuf, (usize, usize))>> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::Dataset(format!(
            "directory {} contains no PNG or JPEG images",
            dir.display()
        )));
    }
    let mut ok = Vec::with_capacity(files.len());
    let mut failures = Vec::new();
    for f in files {
        match image_dimensions(&f) {
            Ok(dims) => ok.push((f, dims)),
            Err(e) => failures.push(e.to_string()),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Dataset(format!(
            "{} undecodable file(s):\n  {}",
            failures.len(),
            failures.join("\n  ")
        )));
    }
    Ok(ok)
}

fn draw_crop(rng: &mut Rng, (w, h): (usize, usize)) -> Option<CropRegion> {
    if w < MIN_CROP || h < MIN_CROP {
        return None;
    }
    let (lo, hi) = CROP_FRACTION;
    let side = |extent: usize, rng: &mut Rng| {
        let f = lo + (hi - lo) * rng.unit_f64();
        ((extent as f64 * f).floor() as usize).clamp(MIN_CROP, extent)
    };
    let height = side(h, rng);
    let width = side(w, rng);
    let top = rng.below(h - height + 1);
    let left = rng.below(w - width + 1);
    Some(CropRegion {
        top,
        left,
        height,
        width,
    })
}

/// Originals plus their augmentations, in file order.
fn expand(
    files: &[(PathBuf, (usize, usize))],
    label: Label,
    config: &PrepareConfig,
    rng: &mut Rng,
) -> Vec<Sample> {
    let mut out = Vec::new();
    for (path, dims) in files {
        out.push(Sample::original(path.clone(), label));
        for k in 1..=config.rotations {
            out.push(Sample {
                path: path.clone(),
                label,
                origin: Origin::Rotate(k),
            });
        }
        let mut regions: Vec<CropRegion> = Vec::with_capacity(config.crops);
        for _ in 0..config.crops {
            for _ in 0..CROP_ATTEMPTS {
                match draw_crop(rng, *dims) {
                    Some(r) if !regions.contains(&r) => {
                        regions.push(r);
                        break;
                    }
                    Some(_) => continue,
                    None => break,
                }
            }
        }
        out.extend(regions.into_iter().map(|r| Sample {
            path: path.clone(),
            label,
            origin: Origin::Crop(r),
        }));
    }
    out
}

/// Runs the pipeline on `<root>/animals`, `<root>/litter` and, when present,
/// `<root>/test/{animals,litter}`. Sample paths are absolute.
pub fn prepare(root: &Path, config: &PrepareConfig) -> Result<SampleManifest> {
    if config.rotations > 3 {
        return Err(Error::InvalidArgument(format!(
            "rotations must be in 0..=3, got {}",
            config.rotations
        )));
    }
    if !(config.val_fraction > 0.0 && config.val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction must lie in (0, 1), got {}",
            config.val_fraction
        )));
    }
    let root = fs::canonicalize(root).map_err(|e| Error::io(root, e))?;
    let mut rng = Rng::new(config.seed);

    let labels = [Label::Animal, Label::Litter];
    let mut ingested = Vec::new();
    let mut failures = Vec::new();
    for label in labels {
        match ingest_class(&root.join(class_dir(label))) {
            Ok(files) => ingested.push((label, files)),
            Err(e) => failures.push(e.to_string()),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Dataset(failures.join("\n")));
    }

    let mut pool = Vec::new();
    for (label, files) in &ingested {
        pool.extend(expand(files, *label, config, &mut rng));
    }
    let balanced = balance_classes(pool, &mut rng)?;
    let (train, val) = split_train_val(balanced, config.val_fraction, &mut rng)?;

    let mut manifest = SampleManifest::new(config.seed);
    for s in train {
        manifest.push(Split::Train, s);
    }
    for s in val {
        manifest.push(Split::Val, s);
    }
    let test_root = root.join("test");
    if test_root.is_dir() {
        for label in labels {
            let dir = test_root.join(class_dir(label));
            if !dir.is_dir() {
                continue;
            }
            for (path, _) in ingest_class(&dir)? {
                manifest.push(Split::Test, Sample::original(path, label));
            }
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_regions_fit() {
        let mut rng = Rng::new(4);
        for dims in [(8, 8), (9, 30), (140, 140), (640, 480)] {
            for _ in 0..50 {
                let r = draw_crop(&mut rng, dims).unwrap();
                assert!(r.height >= MIN_CROP && r.width >= MIN_CROP);
                assert!(r.top + r.height <= dims.1);
                assert!(r.left + r.width <= dims.0);
            }
        }
        assert!(draw_crop(&mut rng, (7, 100)).is_none());
    }

    #[test]
    fn extension_filter() {
        assert!(has_image_extension(Path::new("a/b.PNG")));
        assert!(has_image_extension(Path::new("a/b.jpeg")));
        assert!(!has_image_extension(Path::new("a/b.gif")));
        assert!(!has_image_extension(Path::new("a/png")));
    }

    #[test]
    fn expansion_counts() {
        let files = vec![(PathBuf::from("/x/a.png"), (100, 80))];
        let config = PrepareConfig {
            rotations: 3,
            crops: 2,
            ..Default::default()
        };
        let s = expand(&files, Label::Litter, &config, &mut Rng::new(1));
        assert_eq!(s.len(), 6);
        assert!(s.iter().all(|x| x.path == files[0].0));
        assert_eq!(s.iter().filter(|x| x.origin.is_augmented()).count(), 5);
    }
}
