//! Flatten and the single-unit logit head feeding the sigmoid.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// `[C,H,W]` (or any rank) to a row-major vector.
pub fn flatten<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::from_parts_unchecked(vec![x.len()], x.data().to_vec())
}

/// Inverse of [`flatten`], used to reshape the gradient on the way back.
pub fn unflatten<T: Real>(v: Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    v.reshape(shape)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads<T: Real = f32> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check<T: Real>(v: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if v.rank() != 1 || w.shape() != v.shape() {
        return Err(Error::Shape(format!(
            "logit head: input {:?} and weights {:?} must be equal-length vectors",
            v.shape(),
            w.shape()
        )));
    }
    if b.shape() != [1] {
        return Err(Error::Shape(format!(
            "logit head bias must be [1], got {:?}",
            b.shape()
        )));
    }
    Ok(())
}

/// `z = w · v + b`.
pub fn logit_head_forward<T: Real>(v: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    check(v, w, b)?;
    let dot: T = v.data().iter().zip(w.data()).map(|(&a, &c)| a * c).sum();
    let z = dot + b.data()[0];
    if !z.is_finite() {
        return Err(Error::NonFinite("logit".into()));
    }
    Ok(z)
}

pub fn logit_head_backward<T: Real>(
    v: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    dz: T,
) -> Result<HeadGrads<T>> {
    check(v, w, b)?;
    Ok(HeadGrads {
        input: w.scale(dz)?,
        weights: v.scale(dz)?,
        bias: Tensor::from_vec(&[1], vec![dz])?,
    })
}
