//! Binary model files.
//!
//! Little-endian throughout:
//!
//! ```text
//! "MDCNN1"                       6 bytes
//! version: u16 = 1
//! tensor count: u16
//! per tensor:
//!     name length: u16, name: UTF-8
//!     rank: u8, extents: u32 each
//!     payload: f32 values, row-major
//! ```
//!
//! Tensors appear in the order of [`crate::model::PARAM_NAMES`]. Nothing may
//! follow the last payload.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Architecture, ModelParams};
use crate::tensor::{Tensor, MAX_RANK};

pub const MAGIC: &[u8; 6] = b"MDCNN1";
pub const FORMAT_VERSION: u16 = 1;

pub fn encode_model(params: &ModelParams<f32>) -> Result<Vec<u8>> {
    params.validate()?;
    let mut out = Vec::with_capacity(10 + 4 * params.param_count() + 8 * 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let named: Vec<_> = params.named().collect();
    out.extend_from_slice(&(named.len() as u16).to_le_bytes());
    for (name, t) in named {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &e in t.shape() {
            let e = u32::try_from(e)
                .map_err(|_| Error::ModelFile(format!("tensor {name} extent {e} exceeds u32")))?;
            out.extend_from_slice(&e.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::ModelFile(format!(
                "truncated while reading {what} at byte {}",
                self.pos + 6
            ))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses everything after the magic into named tensors.
fn decode_body(body: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut c = Cursor { bytes: body, pos: 0 };
    let version = c.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFile(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let count = c.u16("tensor count")?;
    let mut out = Vec::with_capacity(count as usize);
    for i in 0..count {
        let len = c.u16("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "tensor name")?)
            .map_err(|_| Error::ModelFile(format!("tensor {i} name is not UTF-8")))?
            .to_string();
        let rank = c.u8("rank")? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::ModelFile(format!("tensor {name} has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("extent")? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::ModelFile(format!("tensor {name} shape {shape:?} is too large")))?;
        let payload = c.take(len, &format!("payload of {name}"))?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let t = Tensor::from_vec(&shape, data)
            .map_err(|e| Error::ModelFile(format!("tensor {name}: {e}")))?;
        out.push((name, t));
    }
    if c.pos != body.len() {
        return Err(Error::ModelFile(format!(
            "{} unexpected trailing bytes",
            body.len() - c.pos
        )));
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8], arch: Architecture) -> Result<ModelParams<f32>> {
    let body = bytes
        .strip_prefix(MAGIC.as_slice())
        .ok_or_else(|| Error::ModelFile("bad magic, not a model file".into()))?;
    ModelParams::from_named(arch, decode_body(body)?)
}

/// Writes the model via a temporary file and rename.
pub fn save_model(params: &ModelParams<f32>, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &encode_model(params)?)
}

/// Reads the named tensors of a model file without checking them against an
/// architecture. The magic is verified before the rest of the file is read.
pub fn read_model_tensors(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 6];
    file.read_exact(&mut magic)
        .map_err(|_| Error::ModelFile(format!("{}: too short for a model file", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::ModelFile(format!(
            "{}: bad magic, not a model file",
            path.display()
        )));
    }
    let mut body = Vec::new();
    file.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
    decode_body(&body)
}

/// Loads a model and checks every tensor against `arch`.
pub fn load_model(path: &Path, arch: Architecture) -> Result<ModelParams<f32>> {
    ModelParams::from_named(arch, read_model_tensors(path)?)
}

/// Header bytes for `arch`: everything except the f32 payloads.
pub fn header_len(arch: &Architecture) -> Result<usize> {
    let shapes = arch.param_shapes()?;
    let per_tensor: usize = crate::model::PARAM_NAMES
        .iter()
        .zip(shapes.iter())
        .map(|(n, s)| 2 + n.len() + 1 + 4 * s.len())
        .sum();
    Ok(MAGIC.len() + 2 + 2 + per_tensor)
}
