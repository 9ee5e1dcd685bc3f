//! Dense row-major tensors of rank 1 to 4.
//!
//! Every public constructor and operation rejects non-finite values, so a
//! `Tensor` in hand is always finite. Training runs in `f32`; the gradient
//! checker re-runs the same kernels in `f64`.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, NumAssign};

use crate::error::{Error, Result};

/// Scalar element type of a tensor.
pub trait Real: Float + NumAssign + Sum + Debug + Default + Send + Sync + 'static {
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

pub const MAX_RANK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Real = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::Shape(format!(
            "rank must be between 1 and {MAX_RANK}, got {}",
            shape.len()
        )));
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return Err(Error::Shape(format!(
            "extent {pos} of shape {shape:?} is zero"
        )));
    }
    Ok(shape.iter().product())
}

pub(crate) fn ensure_finite<T: Real>(data: &[T], what: &str) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NonFinite(format!("{what} at flat index {i}"))),
    }
}

impl<T: Real> Tensor<T> {
    /// Builds a tensor from row-major data.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        ensure_finite(&data, "tensor data")?;
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let len = check_shape(shape)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("fill value {value:?}")));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    /// Zeros with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Mutable access to the raw buffer. Callers must keep values finite;
    /// [`Tensor::validate`] re-checks.
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(&self.data, "tensor data")
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::Shape(format!(
                "index {index:?} has rank {}, tensor has rank {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut flat = 0;
        for (&i, &extent) in index.iter().zip(&self.shape) {
            if i >= extent {
                return Err(Error::Shape(format!(
                    "index {index:?} out of bounds for shape {:?}",
                    self.shape
                )));
            }
            flat = flat * extent + i;
        }
        Ok(flat)
    }

    pub fn multi_index(&self, mut flat: usize) -> Result<Vec<usize>> {
        if flat >= self.data.len() {
            return Err(Error::Shape(format!(
                "flat index {flat} out of bounds for {} elements",
                self.data.len()
            )));
        }
        let mut index = vec![0; self.shape.len()];
        for (slot, &extent) in index.iter_mut().zip(&self.shape).rev() {
            *slot = flat % extent;
            flat /= extent;
        }
        Ok(index)
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.flat_index(index)?])
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn elementwise(&self, other: &Self, op: BinaryOp) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "elementwise {op:?} on {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let f = match op {
            BinaryOp::Add => |a: T, b: T| a + b,
            BinaryOp::Sub => |a: T, b: T| a - b,
            BinaryOp::Mul => |a: T, b: T| a * b,
        };
        let data: Vec<T> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        ensure_finite(&data, "elementwise result")?;
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, BinaryOp::Add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, BinaryOp::Sub)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.elementwise(other, BinaryOp::Mul)
    }

    pub fn scale(&self, s: T) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("scale factor {s:?}")));
        }
        let data: Vec<T> = self.data.iter().map(|&v| v * s).collect();
        ensure_finite(&data, "scaled tensor")?;
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// In-place `self += other`; shapes must match.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "add_assign on {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        ensure_finite(&self.data, "accumulated tensor")
    }

    /// Converts element type, e.g. `f32` weights to `f64` for gradient checks.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }
}
