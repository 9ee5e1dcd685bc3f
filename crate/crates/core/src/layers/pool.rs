//! Non-overlapping 2x2 max pooling with stride 2.
//!
//! Odd trailing rows and columns are dropped. Within a window the scan order
//! is top-left, top-right, bottom-left, bottom-right and only a strictly
//! larger value replaces the current maximum, so ties go to the lowest flat
//! index.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Argmax positions of a pooling call, as flat indices into its input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolTrace {
    input_shape: [usize; 3],
    argmax: Vec<usize>,
}

impl PoolTrace {
    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn output_shape(&self) -> [usize; 3] {
        let [c, h, w] = self.input_shape;
        [c, h / 2, w / 2]
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

pub fn maxpool2x2_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolTrace)> {
    let [c, h, w] = *x.shape() else {
        return Err(Error::Shape(format!(
            "max pool expects [C,H,W], got {:?}",
            x.shape()
        )));
    };
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!(
            "max pool needs at least 2x2 spatial extent, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let data = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let top = base + 2 * y * w + 2 * xo;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::from_parts_unchecked(vec![c, oh, ow], out),
        PoolTrace {
            input_shape: [c, h, w],
            argmax,
        },
    ))
}

/// Routes each output gradient to the input position that won its window.
pub fn maxpool2x2_backward<T: Real>(trace: &PoolTrace, g: &Tensor<T>) -> Result<Tensor<T>> {
    let expected = trace.output_shape();
    if g.shape() != expected {
        return Err(Error::Shape(format!(
            "pool gradient {:?} does not match trace output {expected:?}",
            g.shape()
        )));
    }
    let [c, h, w] = trace.input_shape;
    let mut grad = vec![T::zero(); c * h * w];
    for (&idx, &gv) in trace.argmax.iter().zip(g.data()) {
        grad[idx] += gv;
    }
    Ok(Tensor::from_parts_unchecked(trace.input_shape.to_vec(), grad))
}
