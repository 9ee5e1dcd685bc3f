//! Minibatch training, per-epoch metrics, replicate averaging and the
//! history CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::data::manifest::{Sample, SampleManifest, Split};
use crate::data::split::split_train_val;
use crate::error::{Error, Result};
use crate::eval::ConfusionMatrix;
use crate::layers::sigmoid;
use crate::loss::{bce_loss_from_logit, logit_loss_acc, predict_label, EpochMetrics, Label};
use crate::model::{sample_backward, sample_forward, Architecture, ModelGrads, ModelParams};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Used only when the manifest has no validation split.
    pub val_fraction: f64,
    pub image_size: usize,
    pub channels: usize,
    pub filters: usize,
    pub kernel_sizes: [usize; 3],
    /// Pooling window side; only 2 is implemented.
    pub pool: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub replicates: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 95,
            val_fraction: 0.1,
            image_size: 140,
            channels: 3,
            filters: 32,
            kernel_sizes: [3, 2, 3],
            pool: 2,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            replicates: 10,
        }
    }
}

impl TrainConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_size: self.image_size,
            channels: self.channels,
            filters: self.filters,
            kernels: self.kernel_sizes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1".into());
        }
        if self.replicates < 1 {
            return bad("replicates must be at least 1".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("val_fraction {} is not in (0, 1)", self.val_fraction));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if self.pool != 2 {
            return bad(format!("pool size {} is not supported, only 2", self.pool));
        }
        if self.image_size == 0 || self.channels == 0 || self.filters == 0 {
            return bad("image size, channels and filters must be positive".into());
        }
        self.architecture()
            .shape_chain()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHistory {
    pub epochs: Vec<EpochMetrics>,
    /// Validation-set confusion matrix of the final weights.
    pub confusion: ConfusionMatrix,
    pub seed: u64,
    pub duration: Duration,
}

impl RunHistory {
    pub fn last(&self) -> &EpochMetrics {
        self.epochs.last().expect("history has at least one epoch")
    }
}

struct LoadedSet {
    images: Vec<Tensor>,
    labels: Vec<Label>,
}

fn load_set(samples: &[Sample], size: usize) -> Result<LoadedSet> {
    let images = samples
        .par_iter()
        .map(|s| s.load(size))
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedSet {
        images,
        labels: samples.iter().map(|s| s.label).collect(),
    })
}

fn logits(params: &ModelParams, images: &[Tensor]) -> Result<Vec<f32>> {
    images
        .par_iter()
        .map(|img| sample_forward(params, img, false).map(|(z, _)| z))
        .collect()
}

/// `(train, val)` samples: the manifest's splits, or a seeded split of the
/// train samples when the manifest has no validation samples.
fn train_val(config: &TrainConfig, manifest: &SampleManifest) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let train: Vec<Sample> = manifest.samples(Split::Train).into_iter().cloned().collect();
    let val: Vec<Sample> = manifest.samples(Split::Val).into_iter().cloned().collect();
    if train.is_empty() {
        return Err(Error::Dataset("the train split is empty".into()));
    }
    if !val.is_empty() {
        return Ok((train, val));
    }
    split_train_val(train, config.val_fraction, &mut Rng::new(config.seed))
}

fn diverged(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged { epoch, batch },
        other => other,
    }
}

/// One minibatch step. Per-sample gradients are computed in parallel and
/// summed in batch order, so results do not depend on the thread count.
fn train_batch(
    params: &mut ModelParams,
    adam: &mut AdamState,
    set: &LoadedSet,
    batch: &[usize],
) -> Result<f64> {
    let scale = 1.0 / batch.len() as f32;
    let params_ref = &*params;
    let per_sample = batch
        .par_iter()
        .map(|&i| {
            let (z, trace) = sample_forward(params_ref, &set.images[i], true)?;
            let (loss, dz) = bce_loss_from_logit(z, set.labels[i]);
            let trace = trace.expect("trace was requested");
            Ok((loss, sample_backward(params_ref, &trace, dz * scale)?))
        })
        .collect::<Result<Vec<(f32, ModelGrads)>>>()?;
    let mut total = ModelGrads::zeros(params.arch())?;
    let mut loss = 0.0f64;
    for (l, g) in &per_sample {
        loss += *l as f64;
        total.accumulate(g)?;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("batch loss".into()));
    }
    adam.step_model(params, &total)?;
    Ok(loss / batch.len() as f64)
}

/// Trains one model. Weights come from `Rng::new(config.seed)`, followed by
/// one shuffle of the train order per epoch from the same stream.
pub fn train(config: &TrainConfig, manifest: &SampleManifest) -> Result<(ModelParams, RunHistory)> {
    config.validate()?;
    let start = Instant::now();
    let (train_samples, val_samples) = train_val(config, manifest)?;
    if val_samples.is_empty() {
        return Err(Error::Dataset("the validation split is empty".into()));
    }
    let train_set = load_set(&train_samples, config.image_size)?;
    let val_set = load_set(&val_samples, config.image_size)?;

    let mut rng = Rng::new(config.seed);
    let mut params = ModelParams::init(config.architecture(), &mut rng)?;
    let mut adam = AdamState::for_model(AdamConfig::with_lr(config.lr), &params)?;
    let mut order: Vec<usize> = (0..train_set.images.len()).collect();
    let batches = order.len().div_ceil(config.batch_size);
    let mut history = Vec::with_capacity(config.epochs);
    let mut confusion = ConfusionMatrix::default();

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            train_batch(&mut params, &mut adam, &train_set, batch)
                .map_err(|e| diverged(e, epoch, b + 1))?;
        }
        let train_z = logits(&params, &train_set.images).map_err(|e| diverged(e, epoch, batches))?;
        let val_z = logits(&params, &val_set.images).map_err(|e| diverged(e, epoch, batches))?;
        let (train_loss, train_acc) = logit_loss_acc(&train_z, &train_set.labels)?;
        let (val_loss, val_acc) = logit_loss_acc(&val_z, &val_set.labels)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::Diverged { epoch, batch: batches });
        }
        history.push(EpochMetrics {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
        if epoch == config.epochs {
            confusion = ConfusionMatrix::from_pairs(
                val_set
                    .labels
                    .iter()
                    .zip(&val_z)
                    .map(|(&y, &z)| (y, predict_label(sigmoid(z)))),
            );
        }
    }
    Ok((
        params,
        RunHistory {
            epochs: history,
            confusion,
            seed: config.seed,
            duration: start.elapsed(),
        },
    ))
}

/// Means of the four final metrics over replicate runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateMeans {
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

impl ReplicateMeans {
    /// `(train_loss, val_loss, train_acc, val_acc)` rounded to 2 decimals.
    pub fn rounded(&self) -> [f64; 4] {
        [self.train_loss, self.val_loss, self.train_acc, self.val_acc].map(round2)
    }
}

/// Rounds half away from zero at 2 decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn replicate_means(finals: &[EpochMetrics]) -> Result<ReplicateMeans> {
    if finals.is_empty() {
        return Err(Error::InvalidArgument("no replicate results to average".into()));
    }
    let n = finals.len() as f64;
    let mean = |f: fn(&EpochMetrics) -> f64| finals.iter().map(f).sum::<f64>() / n;
    Ok(ReplicateMeans {
        train_loss: mean(|m| m.train_loss),
        val_loss: mean(|m| m.val_loss),
        train_acc: mean(|m| m.train_acc),
        val_acc: mean(|m| m.val_acc),
    })
}

#[derive(Debug, Clone)]
pub struct ReplicateRun {
    pub params: ModelParams,
    pub history: RunHistory,
}

/// `n` trainings with seeds `seed, seed + 1, ...`, run one after another.
pub fn run_replicates(
    config: &TrainConfig,
    manifest: &SampleManifest,
    n: usize,
) -> Result<(Vec<ReplicateRun>, ReplicateMeans)> {
    if n < 1 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    let mut runs = Vec::with_capacity(n);
    for i in 0..n {
        let cfg = TrainConfig {
            seed: config.seed.wrapping_add(i as u64),
            ..*config
        };
        let (params, history) = train(&cfg, manifest)?;
        runs.push(ReplicateRun { params, history });
    }
    let finals: Vec<EpochMetrics> = runs.iter().map(|r| *r.history.last()).collect();
    let means = replicate_means(&finals)?;
    Ok((runs, means))
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

pub fn history_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::with_capacity(64 * (history.len() + 1));
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    for m in history {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            m.epoch, m.train_loss, m.train_acc, m.val_loss, m.val_acc
        );
    }
    out
}

pub fn write_history_csv(history: &[EpochMetrics], path: &Path) -> Result<()> {
    crate::io::write_atomic(path, history_csv(history).as_bytes())
}

pub fn parse_history_csv(text: &str) -> Result<Vec<EpochMetrics>> {
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(Error::InvalidArgument("history CSV header is missing".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::InvalidArgument(format!("history CSV line {}: {line:?}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            let [epoch, tl, ta, vl, va] = f[..] else {
                return Err(bad());
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(EpochMetrics {
                epoch: epoch.parse().map_err(|_| bad())?,
                train_loss: num(tl)?,
                train_acc: num(ta)?,
                val_loss: num(vl)?,
                val_acc: num(va)?,
            })
        })
        .collect()
}

pub fn read_history_csv(path: &Path) -> Result<Vec<EpochMetrics>> {
    parse_history_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}
