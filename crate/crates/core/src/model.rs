//! The three-stage convolutional classifier and its backward pass.
//!
//! Each stage is conv (valid, stride 1) -> ReLU -> 2x2 max pool. The last
//! pooled map is flattened into a single-unit logit head; the sigmoid of the
//! logit is the probability of class 1 (litter).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layers::{
    conv2d_backward_impl, conv2d_forward, flatten, logit_head_backward, logit_head_forward,
    maxpool2x2_backward, maxpool2x2_forward, relu_backward, relu_forward, sigmoid, unflatten,
    ConvSpec, PoolTrace,
};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

/// Tensor names in storage and optimizer order.
pub const PARAM_NAMES: [&str; 8] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "conv3.weight",
    "conv3.bias",
    "head.weight",
    "head.bias",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_size: usize,
    pub channels: usize,
    pub filters: usize,
    pub kernels: [usize; 3],
}

impl Default for Architecture {
    /// 140x140 RGB input, 32 filters per layer, kernels 3x3, 2x2, 3x3.
    fn default() -> Self {
        Self {
            input_size: 140,
            channels: 3,
            filters: 32,
            kernels: [3, 2, 3],
        }
    }
}

/// Shapes of every stage for one image, in forward order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeChain {
    pub input: Vec<usize>,
    /// `(conv output, pooled output)` per stage; ReLU keeps the conv shape.
    pub stages: [(Vec<usize>, Vec<usize>); 3],
    pub flat_len: usize,
}

impl ShapeChain {
    /// conv1, pool1, conv2, pool2, conv3, pool3, flatten, logit.
    pub fn listed(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for (conv, pool) in &self.stages {
            out.push(conv.clone());
            out.push(pool.clone());
        }
        out.push(vec![self.flat_len]);
        out.push(vec![1]);
        out
    }
}

impl Architecture {
    pub fn shape_chain(&self) -> Result<ShapeChain> {
        if self.input_size == 0 || self.channels == 0 || self.filters == 0 {
            return Err(Error::Config("architecture extents must be positive".into()));
        }
        let mut size = self.input_size;
        let mut stages: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(3);
        for (layer, &k) in self.kernels.iter().enumerate() {
            if k == 0 || size < k {
                return Err(Error::Config(format!(
                    "conv{} kernel {k}x{k} does not fit a {size}x{size} input",
                    layer + 1
                )));
            }
            let conv = size - k + 1;
            if conv < 2 {
                return Err(Error::Config(format!(
                    "conv{} output {conv}x{conv} is too small to pool",
                    layer + 1
                )));
            }
            size = conv / 2;
            stages.push((
                vec![self.filters, conv, conv],
                vec![self.filters, size, size],
            ));
        }
        Ok(ShapeChain {
            input: vec![self.channels, self.input_size, self.input_size],
            stages: stages.try_into().expect("three stages"),
            flat_len: self.filters * size * size,
        })
    }

    /// Shapes for [`PARAM_NAMES`], in the same order.
    pub fn param_shapes(&self) -> Result<[Vec<usize>; 8]> {
        let chain = self.shape_chain()?;
        let f = self.filters;
        let [k1, k2, k3] = self.kernels;
        Ok([
            vec![f, self.channels, k1, k1],
            vec![f],
            vec![f, f, k2, k2],
            vec![f],
            vec![f, f, k3, k3],
            vec![f],
            vec![chain.flat_len],
            vec![1],
        ])
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum())
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [self.channels, self.input_size, self.input_size]
    }
}

/// Learnable tensors of the classifier. Gradients use the same type so they
/// mirror the parameters name for name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Real = f32> {
    arch: Architecture,
    pub conv: [ConvSpec<T>; 3],
    pub head_weights: Tensor<T>,
    pub head_bias: Tensor<T>,
}

pub type ModelGrads<T = f32> = ModelParams<T>;

impl<T: Real> ModelParams<T> {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        let shapes = arch.param_shapes()?;
        let tensors = shapes
            .iter()
            .map(|s| Tensor::zeros(s))
            .collect::<Result<Vec<_>>>()?;
        Self::from_tensors(arch, tensors)
    }

    /// He-uniform weights (fan-in = inputs per output unit), zero biases.
    /// Draw order: conv1, conv2, conv3, head.
    pub fn init(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        let shapes = arch.param_shapes()?;
        let mut tensors = Vec::with_capacity(8);
        for pair in shapes.chunks(2) {
            let (ws, bs) = (&pair[0], &pair[1]);
            let fan_in = if ws.len() == 1 {
                ws[0]
            } else {
                ws[1..].iter().product()
            };
            tensors.push(rng.init_weights(ws, fan_in)?);
            tensors.push(Tensor::zeros(bs)?);
        }
        Self::from_tensors(arch, tensors)
    }

    /// Builds parameters from tensors in [`PARAM_NAMES`] order, checking shapes.
    pub fn from_tensors(arch: Architecture, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let shapes = arch.param_shapes()?;
        if tensors.len() != PARAM_NAMES.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, got {}",
                PARAM_NAMES.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in PARAM_NAMES.iter().zip(&shapes).zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::TensorMismatch {
                    name: name.to_string(),
                    reason: format!("expected shape {shape:?}, found {:?}", t.shape()),
                });
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        let conv = [
            ConvSpec::new(next(), next())?,
            ConvSpec::new(next(), next())?,
            ConvSpec::new(next(), next())?,
        ];
        Ok(Self {
            arch,
            conv,
            head_weights: next(),
            head_bias: next(),
        })
    }

    /// Looks tensors up by name; missing, unknown or misshapen tensors are
    /// reported by name.
    pub fn from_named(arch: Architecture, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut slots: Vec<Option<Tensor<T>>> = vec![None; PARAM_NAMES.len()];
        for (name, t) in named {
            let pos = PARAM_NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::TensorMismatch {
                    name: name.clone(),
                    reason: "not part of this architecture".into(),
                })?;
            if slots[pos].replace(t).is_some() {
                return Err(Error::TensorMismatch {
                    name,
                    reason: "appears more than once".into(),
                });
            }
        }
        let tensors = slots
            .into_iter()
            .zip(PARAM_NAMES)
            .map(|(t, name)| {
                t.ok_or_else(|| Error::TensorMismatch {
                    name: name.to_string(),
                    reason: "missing".into(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_tensors(arch, tensors)
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn tensors(&self) -> [&Tensor<T>; 8] {
        let [c1, c2, c3] = &self.conv;
        [
            &c1.weights,
            &c1.bias,
            &c2.weights,
            &c2.bias,
            &c3.weights,
            &c3.bias,
            &self.head_weights,
            &self.head_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 8] {
        let [c1, c2, c3] = &mut self.conv;
        [
            &mut c1.weights,
            &mut c1.bias,
            &mut c2.weights,
            &mut c2.bias,
            &mut c3.weights,
            &mut c3.bias,
            &mut self.head_weights,
            &mut self.head_bias,
        ]
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor<T>)> {
        PARAM_NAMES.into_iter().zip(self.tensors())
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            arch: self.arch,
            conv: [
                self.conv[0].cast(),
                self.conv[1].cast(),
                self.conv[2].cast(),
            ],
            head_weights: self.head_weights.cast(),
            head_bias: self.head_bias.cast(),
        }
    }

    /// `self += other`, tensor by tensor in name order.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, s: T) -> Result<()> {
        for t in self.tensors_mut() {
            *t = t.scale(s)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in self.named() {
            t.validate().map_err(|e| Error::TensorMismatch {
                name: name.to_string(),
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }
}

/// Activations one image leaves behind for the backward pass.
#[derive(Debug, Clone)]
pub struct SampleTrace<T: Real = f32> {
    input: Tensor<T>,
    /// Conv outputs before ReLU.
    pre_activation: [Tensor<T>; 3],
    pools: [PoolTrace; 3],
    /// Pool outputs; `pooled[i]` feeds conv `i + 1`, the last one the head.
    pooled: [Tensor<T>; 3],
    logit: T,
}

impl<T: Real> SampleTrace<T> {
    pub fn logit(&self) -> T {
        self.logit
    }

    pub fn pools(&self) -> &[PoolTrace; 3] {
        &self.pools
    }

    /// Observed shapes, in the same layout as [`Architecture::shape_chain`].
    pub fn shape_chain(&self) -> ShapeChain {
        let stage = |i: usize| {
            (
                self.pre_activation[i].shape().to_vec(),
                self.pooled[i].shape().to_vec(),
            )
        };
        ShapeChain {
            input: self.input.shape().to_vec(),
            stages: [stage(0), stage(1), stage(2)],
            flat_len: self.pooled[2].len(),
        }
    }
}

/// Per-sample traces for a batch, in batch order.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T: Real = f32> {
    pub samples: Vec<SampleTrace<T>>,
}

fn check_image<T: Real>(params: &ModelParams<T>, image: &Tensor<T>) -> Result<()> {
    let expected = params.arch.image_shape();
    if image.shape() != expected {
        return Err(Error::Shape(format!(
            "model expects an image of shape {expected:?}, got {:?}",
            image.shape()
        )));
    }
    Ok(())
}

/// Forward pass for one `[C,S,S]` image; returns the logit and, if asked,
/// the trace needed by [`sample_backward`].
pub fn sample_forward<T: Real>(
    params: &ModelParams<T>,
    image: &Tensor<T>,
    keep_trace: bool,
) -> Result<(T, Option<SampleTrace<T>>)> {
    check_image(params, image)?;
    let mut x = image.clone();
    let mut pre = Vec::with_capacity(3);
    let mut pools = Vec::with_capacity(3);
    let mut pooled = Vec::with_capacity(3);
    for spec in &params.conv {
        let z = conv2d_forward(&x, spec)?;
        let (p, trace) = maxpool2x2_forward(&relu_forward(&z))?;
        if keep_trace {
            pre.push(z);
            pools.push(trace);
            pooled.push(p.clone());
        }
        x = p;
    }
    let logit = logit_head_forward(&flatten(&x), &params.head_weights, &params.head_bias)?;
    let trace = keep_trace.then(|| SampleTrace {
        input: image.clone(),
        pre_activation: pre.try_into().expect("three stages"),
        pools: pools.try_into().expect("three stages"),
        pooled: pooled.try_into().expect("three stages"),
        logit,
    });
    Ok((logit, trace))
}

/// Gradients of the parameters given `dloss/dlogit` for one traced sample.
pub fn sample_backward<T: Real>(
    params: &ModelParams<T>,
    trace: &SampleTrace<T>,
    logit_grad: T,
) -> Result<ModelGrads<T>> {
    if !logit_grad.is_finite() {
        return Err(Error::NonFinite("logit gradient".into()));
    }
    let last = &trace.pooled[2];
    let head = logit_head_backward(&flatten(last), &params.head_weights, &params.head_bias, logit_grad)?;
    let mut upstream = unflatten(head.input, last.shape())?;
    let mut conv_grads: Vec<(Tensor<T>, Tensor<T>)> = Vec::with_capacity(3);
    for layer in (0..3).rev() {
        let g = maxpool2x2_backward(&trace.pools[layer], &upstream)?;
        let g = relu_backward(&trace.pre_activation[layer], &g)?;
        let input = if layer == 0 {
            &trace.input
        } else {
            &trace.pooled[layer - 1]
        };
        let grads = conv2d_backward_impl(input, &params.conv[layer], &g, layer > 0)?;
        conv_grads.push((grads.weights, grads.bias));
        if let Some(next) = grads.input {
            upstream = next;
        }
    }
    conv_grads.reverse();
    let mut tensors = Vec::with_capacity(8);
    for (w, b) in conv_grads {
        tensors.push(w);
        tensors.push(b);
    }
    tensors.push(head.weights);
    tensors.push(head.bias);
    ModelParams::from_tensors(params.arch, tensors)
}

fn batch_images<T: Real>(params: &ModelParams<T>, batch: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    let [c, s, s2] = params.arch.image_shape();
    match *batch.shape() {
        [_, bc, bh, bw] if (bc, bh, bw) == (c, s, s2) => batch
            .data()
            .chunks_exact(c * s * s2)
            .map(|img| Tensor::from_vec(&[c, s, s2], img.to_vec()))
            .collect(),
        ref other => Err(Error::Shape(format!(
            "model expects a batch [N,{c},{s},{s2}], got {other:?}"
        ))),
    }
}

/// Probabilities of class 1 for a `[N,C,S,S]` batch. Samples are evaluated
/// in parallel; results keep batch order.
pub fn model_forward<T: Real>(
    batch: &Tensor<T>,
    params: &ModelParams<T>,
    keep_trace: bool,
) -> Result<(Tensor<T>, Option<ForwardTrace<T>>)> {
    let images = batch_images(params, batch)?;
    let results = images
        .par_iter()
        .map(|img| sample_forward(params, img, keep_trace))
        .collect::<Result<Vec<_>>>()?;
    let probs = results.iter().map(|(z, _)| sigmoid(*z)).collect();
    let trace = keep_trace.then(|| ForwardTrace {
        samples: results.into_iter().filter_map(|(_, t)| t).collect(),
    });
    Ok((Tensor::from_vec(&[images.len()], probs)?, trace))
}

/// Batch gradients from `dloss/dlogit` per sample, summed in batch order.
pub fn model_backward_logits<T: Real>(
    params: &ModelParams<T>,
    trace: &ForwardTrace<T>,
    logit_grads: &[T],
) -> Result<ModelGrads<T>> {
    if logit_grads.len() != trace.samples.len() {
        return Err(Error::Shape(format!(
            "{} logit gradients for {} traced samples",
            logit_grads.len(),
            trace.samples.len()
        )));
    }
    let per_sample = trace
        .samples
        .par_iter()
        .zip(logit_grads.par_iter())
        .map(|(t, &g)| sample_backward(params, t, g))
        .collect::<Result<Vec<_>>>()?;
    let mut total = ModelParams::zeros(params.arch)?;
    for g in &per_sample {
        total.accumulate(g)?;
    }
    Ok(total)
}

/// Batch gradients from `dloss/dprobability` per sample.
pub fn model_backward<T: Real>(
    params: &ModelParams<T>,
    trace: Option<&ForwardTrace<T>>,
    prob_grad: &Tensor<T>,
) -> Result<ModelGrads<T>> {
    let trace = trace.ok_or_else(|| {
        Error::InvalidArgument("model_backward needs a trace from model_forward".into())
    })?;
    if prob_grad.len() != trace.samples.len() {
        return Err(Error::Shape(format!(
            "{} probability gradients for {} traced samples",
            prob_grad.len(),
            trace.samples.len()
        )));
    }
    let logit_grads: Vec<T> = trace
        .samples
        .iter()
        .zip(prob_grad.data())
        .map(|(t, &g)| {
            let p = sigmoid(t.logit);
            g * p * (T::one() - p)
        })
        .collect();
    model_backward_logits(params, trace, &logit_grads)
}
