//! Valid (unpadded) stride-1 2-D cross-correlation.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ensure_finite, Real, Tensor};

/// Weights `[out, in, kh, kw]` and bias `[out]` of one convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec<T: Real = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> ConvSpec<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let spec = Self { weights, bias };
        spec.check()?;
        Ok(spec)
    }

    pub fn zeros(out_channels: usize, in_channels: usize, kh: usize, kw: usize) -> Result<Self> {
        Self::new(
            Tensor::zeros(&[out_channels, in_channels, kh, kw])?,
            Tensor::zeros(&[out_channels])?,
        )
    }

    /// He-uniform weights, zero bias.
    pub fn he_uniform(
        rng: &mut Rng,
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
    ) -> Result<Self> {
        let weights = rng.init_weights(&[out_channels, in_channels, kh, kw], in_channels * kh * kw)?;
        Self::new(weights, Tensor::zeros(&[out_channels])?)
    }

    fn check(&self) -> Result<()> {
        let ws = self.weights.shape();
        if ws.len() != 4 {
            return Err(Error::Shape(format!(
                "conv weights must be [out, in, kh, kw], got {ws:?}"
            )));
        }
        if self.bias.shape() != [ws[0]] {
            return Err(Error::Shape(format!(
                "conv bias must be [{}], got {:?}",
                ws[0],
                self.bias.shape()
            )));
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel_h(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn kernel_w(&self) -> usize {
        self.weights.shape()[3]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn cast<U: Real>(&self) -> ConvSpec<U> {
        ConvSpec {
            weights: self.weights.cast(),
            bias: self.bias.cast(),
        }
    }
}

/// Gradients of one convolution call.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T: Real = f32> {
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Splits an input tensor into (batch, channels, height, width).
fn input_dims<T: Real>(input: &Tensor<T>, spec: &ConvSpec<T>) -> Result<(usize, usize, usize, usize)> {
    spec.check()?;
    let (n, c, h, w) = match *input.shape() {
        [c, h, w] => (1, c, h, w),
        [n, c, h, w] => (n, c, h, w),
        ref s => {
            return Err(Error::Shape(format!(
                "conv input must be [C,H,W] or [N,C,H,W], got {s:?}"
            )))
        }
    };
    if c != spec.in_channels() {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {c}",
            spec.in_channels()
        )));
    }
    if h < spec.kernel_h() || w < spec.kernel_w() {
        return Err(Error::Shape(format!(
            "input {h}x{w} is smaller than the {}x{} kernel",
            spec.kernel_h(),
            spec.kernel_w()
        )));
    }
    Ok((n, c, h, w))
}

fn output_shape(input_rank: usize, n: usize, o: usize, oh: usize, ow: usize) -> Vec<usize> {
    if input_rank == 3 {
        vec![o, oh, ow]
    } else {
        vec![n, o, oh, ow]
    }
}

/// One image: `input` is `[c, h, w]`, `out` is `[o, oh, ow]`.
fn forward_image<T: Real>(input: &[T], c: usize, h: usize, w: usize, spec: &ConvSpec<T>, out: &mut [T]) {
    let (o_n, kh, kw) = (spec.out_channels(), spec.kernel_h(), spec.kernel_w());
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let weights = spec.weights.data();
    for (o, plane) in out.chunks_exact_mut(oh * ow).enumerate().take(o_n) {
        plane.fill(spec.bias.data()[o]);
        for ci in 0..c {
            let chan = &input[ci * h * w..(ci + 1) * h * w];
            let taps = &weights[(o * c + ci) * kh * kw..(o * c + ci + 1) * kh * kw];
            for i in 0..kh {
                for j in 0..kw {
                    let wv = taps[i * kw + j];
                    for (y, dst) in plane.chunks_exact_mut(ow).enumerate() {
                        let start = (y + i) * w + j;
                        for (d, &s) in dst.iter_mut().zip(&chan[start..start + ow]) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(input: &Tensor<T>, spec: &ConvSpec<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = input_dims(input, spec)?;
    let o = spec.out_channels();
    let (oh, ow) = (h - spec.kernel_h() + 1, w - spec.kernel_w() + 1);
    let mut out = vec![T::zero(); n * o * oh * ow];
    for (img, dst) in input
        .data()
        .chunks_exact(c * h * w)
        .zip(out.chunks_exact_mut(o * oh * ow))
    {
        forward_image(img, c, h, w, spec, dst);
    }
    ensure_finite(&out, "conv output")?;
    Ok(Tensor::from_parts_unchecked(
        output_shape(input.rank(), n, o, oh, ow),
        out,
    ))
}

/// Accumulates the gradients of one image into `wgrad`, `bgrad` and
/// (optionally) `igrad`.
#[allow(clippy::too_many_arguments)]
fn backward_image<T: Real>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    spec: &ConvSpec<T>,
    upstream: &[T],
    wgrad: &mut [T],
    bgrad: &mut [T],
    mut igrad: Option<&mut [T]>,
) {
    let (o_n, kh, kw) = (spec.out_channels(), spec.kernel_h(), spec.kernel_w());
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let weights = spec.weights.data();
    for o in 0..o_n {
        let g = &upstream[o * oh * ow..(o + 1) * oh * ow];
        bgrad[o] += g.iter().copied().sum::<T>();
        for ci in 0..c {
            let chan = &input[ci * h * w..(ci + 1) * h * w];
            let base = (o * c + ci) * kh * kw;
            for i in 0..kh {
                for j in 0..kw {
                    let mut acc = T::zero();
                    for (y, grow) in g.chunks_exact(ow).enumerate() {
                        let start = (y + i) * w + j;
                        for (&gv, &s) in grow.iter().zip(&chan[start..start + ow]) {
                            acc += gv * s;
                        }
                    }
                    wgrad[base + i * kw + j] += acc;
                    if let Some(igrad) = igrad.as_deref_mut() {
                        let wv = weights[base + i * kw + j];
                        let ichan = &mut igrad[ci * h * w..(ci + 1) * h * w];
                        for (y, grow) in g.chunks_exact(ow).enumerate() {
                            let start = (y + i) * w + j;
                            for (d, &gv) in ichan[start..start + ow].iter_mut().zip(grow) {
                                *d += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_backward_impl<T: Real>(
    input: &Tensor<T>,
    spec: &ConvSpec<T>,
    upstream: &Tensor<T>,
    want_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let (n, c, h, w) = input_dims(input, spec)?;
    let o = spec.out_channels();
    let (oh, ow) = (h - spec.kernel_h() + 1, w - spec.kernel_w() + 1);
    let expected = output_shape(input.rank(), n, o, oh, ow);
    if upstream.shape() != expected.as_slice() {
        return Err(Error::Shape(format!(
            "conv upstream gradient must be {expected:?}, got {:?}",
            upstream.shape()
        )));
    }
    let mut wgrad = spec.weights.zeros_like();
    let mut bgrad = spec.bias.zeros_like();
    let mut igrad = want_input_grad.then(|| input.zeros_like());
    for b in 0..n {
        let img = &input.data()[b * c * h * w..(b + 1) * c * h * w];
        let g = &upstream.data()[b * o * oh * ow..(b + 1) * o * oh * ow];
        let islice = igrad
            .as_mut()
            .map(|t| &mut t.data_mut()[b * c * h * w..(b + 1) * c * h * w]);
        backward_image(
            img,
            c,
            h,
            w,
            spec,
            g,
            wgrad.data_mut(),
            bgrad.data_mut(),
            islice,
        );
    }
    wgrad.validate()?;
    bgrad.validate()?;
    if let Some(t) = &igrad {
        t.validate()?;
    }
    Ok(ConvGrads {
        input: igrad,
        weights: wgrad,
        bias: bgrad,
    })
}

/// Exact gradients of [`conv2d_forward`] for `input` and `spec`, given the
/// gradient of the loss with respect to the layer output.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    spec: &ConvSpec<T>,
    upstream: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    conv2d_backward_impl(input, spec, upstream, true)
}
