//! Labelled sample lists and their text file format.
//!
//! ```text
//! manifest-v1 seed=<u64>
//! <split>\t<label>\t<origin>\t<path>
//! ```
//!
//! `split` is `train`, `val` or `test`; `label` is `0` (animal) or `1`
//! (litter); `origin` is `original`, `rotate:<k>` or
//! `crop:<top>,<left>,<height>,<width>`; `path` names the source image
//! relative to the manifest's directory. Augmented samples are stored as
//! their source path plus the transform, and are materialised on load.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use crate::data::image::{augment_crop, augment_rotate, decode_rgb, resize_bilinear, CropRegion};
use crate::error::{Error, Result};
use crate::loss::Label;
use crate::tensor::Tensor;

pub const MANIFEST_HEADER: &str = "manifest-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// How a sample was derived from its source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Original,
    Rotate(u8),
    Crop(CropRegion),
}

impl Origin {
    pub fn is_augmented(&self) -> bool {
        !matches!(self, Origin::Original)
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Original => f.write_str("original"),
            Origin::Rotate(k) => write!(f, "rotate:{k}"),
            Origin::Crop(r) => write!(f, "crop:{},{},{},{}", r.top, r.left, r.height, r.width),
        }
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed origin {s:?}"));
        if s == "original" {
            return Ok(Origin::Original);
        }
        if let Some(k) = s.strip_prefix("rotate:") {
            let k: u8 = k.parse().map_err(|_| bad())?;
            if !(1..=3).contains(&k) {
                return Err(bad());
            }
            return Ok(Origin::Rotate(k));
        }
        if let Some(rest) = s.strip_prefix("crop:") {
            let v = rest
                .split(',')
                .map(|p| p.parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            let [top, left, height, width] = v[..] else {
                return Err(bad());
            };
            return Ok(Origin::Crop(CropRegion {
                top,
                left,
                height,
                width,
            }));
        }
        Err(bad())
    }
}

/// One labelled image. For augmented samples `path` is the source file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sample {
    pub path: PathBuf,
    pub label: Label,
    pub origin: Origin,
}

impl Sample {
    pub fn original(path: impl Into<PathBuf>, label: Label) -> Self {
        Self {
            path: path.into(),
            label,
            origin: Origin::Original,
        }
    }

    /// Decodes the source and applies the recorded transform, producing a
    /// `[3, size, size]` tensor.
    pub fn load(&self, size: usize) -> Result<Tensor> {
        let native = decode_rgb(&self.path)?;
        match self.origin {
            Origin::Original => resize_bilinear(&native, size, size),
            Origin::Rotate(k) => augment_rotate(&resize_bilinear(&native, size, size)?, k),
            Origin::Crop(region) => augment_crop(&native, region, size).map_err(|e| Error::Image {
                path: self.path.clone(),
                reason: e.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub split: Split,
    pub sample: Sample,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleManifest {
    pub seed: u64,
    pub records: Vec<Record>,
}

impl SampleManifest {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, split: Split, sample: Sample) {
        self.records.push(Record { split, sample });
    }

    pub fn samples(&self, split: Split) -> Vec<&Sample> {
        self.records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| &r.sample)
            .collect()
    }

    /// Sample counts keyed by (split, label).
    pub fn counts(&self) -> BTreeMap<(Split, Label), usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry((r.split, r.sample.label)).or_insert(0) += 1;
        }
        counts
    }

    pub fn count(&self, split: Split, label: Label) -> usize {
        self.records
            .iter()
            .filter(|r| r.split == split && r.sample.label == label)
            .count()
    }

    /// Renders the file contents with paths relative to `base_dir`.
    pub fn to_text(&self, base_dir: &Path) -> Result<String> {
        let mut out = format!("{MANIFEST_HEADER} seed={}\n", self.seed);
        for (i, r) in self.records.iter().enumerate() {
            let rel = relative_path(&r.sample.path, base_dir);
            let rel = rel.to_str().ok_or_else(|| {
                Error::InvalidArgument(format!("record {i}: path {rel:?} is not UTF-8"))
            })?;
            if rel.is_empty() || rel.contains(['\t', '\n', '\r']) {
                return Err(Error::InvalidArgument(format!(
                    "record {i}: path {rel:?} is empty or contains a tab or newline"
                )));
            }
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.split,
                r.sample.label.as_u8(),
                r.sample.origin,
                rel
            ));
        }
        Ok(out)
    }

    /// Parses file contents; relative paths are resolved against `base_dir`.
    /// `source` is only used in error messages.
    pub fn parse(text: &str, base_dir: &Path, source: &Path) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Manifest {
            path: source.to_path_buf(),
            line,
            reason,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| err(1, "empty manifest".into()))?;
        let seed = header
            .strip_prefix(MANIFEST_HEADER)
            .and_then(|rest| rest.strip_prefix(" seed="))
            .ok_or_else(|| {
                err(
                    1,
                    format!("expected header `{MANIFEST_HEADER} seed=<u64>`, got {header:?}"),
                )
            })?
            .parse::<u64>()
            .map_err(|e| err(1, format!("bad seed: {e}")))?;

        let mut manifest = SampleManifest::new(seed);
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [split, label, origin, path] = fields[..] else {
                return Err(err(
                    lineno,
                    format!("expected 4 tab-separated fields, found {}", fields.len()),
                ));
            };
            let split = split.parse::<Split>().map_err(|e| err(lineno, e.to_string()))?;
            let label = label
                .parse::<Label>()
                .map_err(|e| err(lineno, e.to_string()))?;
            let origin = origin
                .parse::<Origin>()
                .map_err(|e| err(lineno, e.to_string()))?;
            if path.is_empty() {
                return Err(err(lineno, "empty path".into()));
            }
            manifest.push(
                split,
                Sample {
                    path: normalize(&base_dir.join(path)),
                    label,
                    origin,
                },
            );
        }
        Ok(manifest)
    }
}

fn relative_path(path: &Path, base_dir: &Path) -> PathBuf {
    if path.is_absolute() && base_dir.is_absolute() {
        pathdiff::diff_paths(path, base_dir).unwrap_or_else(|| path.to_path_buf())
    } else {
        path.to_path_buf()
    }
}

/// Resolves `.` and `..` components without touching the filesystem.
fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for comp in path.components() {
        match comp {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other),
        }
    }
    out
}

/// Absolute directory containing `path` (which need not exist yet).
pub(crate) fn manifest_dir(path: &Path) -> Result<PathBuf> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::canonicalize(&parent).map_err(|e| Error::io(parent, e))
}

/// Writes the manifest to `path` via a temporary file and rename.
pub fn write_manifest(manifest: &SampleManifest, path: &Path) -> Result<()> {
    let text = manifest.to_text(&manifest_dir(path)?)?;
    crate::io::write_atomic(path, text.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<SampleManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SampleManifest::parse(&text, &manifest_dir(path)?, path)
}
