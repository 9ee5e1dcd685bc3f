//! Image decoding, resizing and the two offline augmentations (90-degree
//! rotations and crops).
//!
//! Resizing is bilinear and ignores aspect ratio. For an output pixel
//! `(oy, ox)` of an `OH x OW` image sampled from an `H x W` source:
//!
//! ```text
//! sy = clamp((oy + 0.5) * H / OH - 0.5, 0, H - 1)      (same for sx with W, OW)
//! y0 = floor(sy), y1 = min(y0 + 1, H - 1), ty = sy - y0
//! top    = lerp(p[y0][x0], p[y0][x1], tx)
//! bottom = lerp(p[y1][x0], p[y1][x1], tx)
//! value  = lerp(top, bottom, ty),   lerp(a, b, t) = a + (b - a) * t
//! ```
//!
//! so equal sizes copy pixels exactly and constant images stay constant.

use std::path::Path;

use image::ImageReader;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Side length every image is resized to before entering the network.
pub const IMAGE_SIZE: usize = 140;

/// Smallest crop side accepted by [`augment_crop`].
pub const MIN_CROP: usize = 8;

fn decode_error(path: &Path, reason: impl ToString) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Reads width and height from the file header without decoding pixels.
pub fn image_dimensions(path: &Path) -> Result<(usize, usize)> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format().is_none() {
        return Err(decode_error(path, "unsupported image format"));
    }
    let (w, h) = reader
        .into_dimensions()
        .map_err(|e| decode_error(path, e))?;
    if w == 0 || h == 0 {
        return Err(decode_error(path, "image has zero area"));
    }
    Ok((w as usize, h as usize))
}

/// Decodes a PNG or JPEG at native resolution into `[3, H, W]` with values
/// `byte / 255`. Alpha is dropped.
pub fn decode_rgb(path: &Path) -> Result<Tensor> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format().is_none() {
        return Err(decode_error(path, "unsupported image format"));
    }
    let rgb = reader.decode().map_err(|e| decode_error(path, e))?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w == 0 || h == 0 {
        return Err(decode_error(path, "image has zero area"));
    }
    Ok(rgb_to_tensor(rgb.as_raw(), w, h))
}

/// Interleaved RGB bytes to a planar `[3, H, W]` tensor in `[0, 1]`.
pub fn rgb_to_tensor(raw: &[u8], w: usize, h: usize) -> Tensor {
    let mut data = vec![0.0f32; 3 * w * h];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * w * h + i] = v as f32 / 255.0;
        }
    }
    Tensor::from_parts_unchecked(vec![3, h, w], data)
}

fn image_dims(img: &Tensor) -> Result<(usize, usize, usize)> {
    match *img.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::Shape(format!("expected an image [C,H,W], got {s:?}"))),
    }
}

/// Sampling positions along one axis: `(i0, i1, t)` per output index.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

/// Bilinear resize of every channel to `out_h x out_w`.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = image_dims(img)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize target must be non-empty".into()));
    }
    let ys = axis_taps(h, out_h);
    let xs = axis_taps(w, out_w);
    let src = img.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, ty) in &ys {
            for &(x0, x1, tx) in &xs {
                let top = lerp(plane[y0 * w + x0], plane[y0 * w + x1], tx);
                let bottom = lerp(plane[y1 * w + x0], plane[y1 * w + x1], tx);
                out.push(lerp(top, bottom, ty));
            }
        }
    }
    Tensor::from_vec(&[c, out_h, out_w], out)
}

/// Decodes and resizes to `size x size`.
pub fn load_image(path: &Path, size: usize) -> Result<Tensor> {
    resize_bilinear(&decode_rgb(path)?, size, size)
}

/// Rotates clockwise by `k` quarter turns, `k` in 1..=3. Lossless.
pub fn augment_rotate(img: &Tensor, k: u8) -> Result<Tensor> {
    if !(1..=3).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "rotation must be 1, 2 or 3 quarter turns, got {k}"
        )));
    }
    let (c, h, w) = image_dims(img)?;
    let src = img.data();
    let (oh, ow) = if k == 2 { (h, w) } else { (w, h) };
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let (sy, sx) = match k {
                    1 => (h - 1 - x, y),
                    2 => (h - 1 - y, w - 1 - x),
                    _ => (x, w - 1 - y),
                };
                out.push(plane[sy * w + sx]);
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![c, oh, ow], out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CropRegion {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

/// Cuts `region` out of a native-resolution image and resizes it to `size`.
pub fn augment_crop(img: &Tensor, region: CropRegion, size: usize) -> Result<Tensor> {
    let (c, h, w) = image_dims(img)?;
    let CropRegion {
        top,
        left,
        height,
        width,
    } = region;
    if height < MIN_CROP || width < MIN_CROP {
        return Err(Error::InvalidArgument(format!(
            "crop {height}x{width} is smaller than {MIN_CROP}x{MIN_CROP}"
        )));
    }
    if top + height > h || left + width > w {
        return Err(Error::InvalidArgument(format!(
            "crop {region:?} exceeds a {h}x{w} image"
        )));
    }
    let src = img.data();
    let mut out = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        for y in top..top + height {
            let row = ch * h * w + y * w;
            out.extend_from_slice(&src[row + left..row + left + width]);
        }
    }
    let cropped = Tensor::from_parts_unchecked(vec![c, height, width], out);
    resize_bilinear(&cropped, size, size)
}
