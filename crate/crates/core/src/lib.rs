//! A small convolutional network, written from scratch, that sorts
//! underwater photographs into aquatic life (class 0) and man-made debris
//! (class 1), together with the data preparation, training, evaluation and
//! file formats around it.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
mod io;
pub mod layers;
pub mod loss;
pub mod model;
pub mod model_io;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use eval::{evaluate, metrics_from_matrix, ConfusionMatrix, Metrics};
pub use loss::{EpochMetrics, Label};
pub use model::{Architecture, ModelParams};
pub use model_io::{load_model, save_model};
pub use rng::Rng;
pub use tensor::{Real, Tensor};
pub use train::{run_replicates, train, RunHistory, TrainConfig};
