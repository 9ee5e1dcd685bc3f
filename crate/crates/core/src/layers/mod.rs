//! Layer kernels, generic over `f32` (training) and `f64` (gradient checks).

mod activation;
mod conv;
mod head;
mod pool;

pub use activation::{relu_backward, relu_forward, sigmoid};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvSpec};
pub(crate) use conv::conv2d_backward_impl;
pub use head::{flatten, logit_head_backward, logit_head_forward, unflatten, HeadGrads};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, PoolTrace};
