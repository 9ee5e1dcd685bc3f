use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| v.max(T::zero())).collect();
    Tensor::from_parts_unchecked(x.shape().to_vec(), data)
}

/// Passes `g` where `x > 0`; the subgradient at exactly zero is zero.
pub fn relu_backward<T: Real>(x: &Tensor<T>, g: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != g.shape() {
        return Err(Error::Shape(format!(
            "relu gradient {:?} does not match input {:?}",
            g.shape(),
            x.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(g.data())
        .map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() })
        .collect();
    Ok(Tensor::from_parts_unchecked(x.shape().to_vec(), data))
}

/// Logistic sigmoid. Only `exp(-|z|)` is ever evaluated, so it cannot overflow.
#[inline]
pub fn sigmoid<T: Real>(z: T) -> T {
    let e = (-z.abs()).exp();
    if z >= T::zero() {
        T::one() / (T::one() + e)
    } else {
        e / (T::one() + e)
    }
}
