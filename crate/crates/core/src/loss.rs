//! Binary cross-entropy on logits, the decision rule and batch metrics.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::sigmoid;
use crate::tensor::{Real, Tensor};

/// Class 0 is aquatic life, class 1 is man-made debris.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Animal = 0,
    Litter = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Animal),
            1 => Some(Label::Litter),
            _ => None,
        }
    }

    pub fn target<T: Real>(self) -> T {
        match self {
            Label::Animal => T::zero(),
            Label::Litter => T::one(),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Animal => "Animal",
            Label::Litter => "Litter",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" => Ok(Label::Animal),
            "1" => Ok(Label::Litter),
            other => Err(Error::InvalidArgument(format!(
                "label must be 0 or 1, got {other:?}"
            ))),
        }
    }
}

/// Litter iff `p > 0.5`; exactly 0.5 goes to Animal.
pub fn predict_label<T: Real>(p: T) -> Label {
    if p > T::of(0.5) {
        Label::Litter
    } else {
        Label::Animal
    }
}

/// `max(z,0) - z*y + ln(1 + e^-|z|)` and its derivative `σ(z) - y`.
pub fn bce_loss_from_logit<T: Real>(z: T, y: Label) -> (T, T) {
    let t = y.target::<T>();
    let loss = z.max(T::zero()) - z * t + (-z.abs()).exp().ln_1p();
    (loss, sigmoid(z) - t)
}

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean cross-entropy and accuracy of probabilities against labels.
pub fn batch_loss_acc<T: Real>(probs: &Tensor<T>, labels: &[Label]) -> Result<(f64, f64)> {
    if probs.is_empty() || labels.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (&p, &y) in probs.data().iter().zip(labels) {
        let pc = p.as_f64().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= match y {
            Label::Litter => pc.ln(),
            Label::Animal => (1.0 - pc).ln(),
        };
        correct += usize::from(predict_label(p) == y);
    }
    let n = labels.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Same metrics computed from logits, with the loss in the stable form.
pub fn logit_loss_acc<T: Real>(logits: &[T], labels: &[Label]) -> Result<(f64, f64)> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if logits.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logits for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (&z, &y) in logits.iter().zip(labels) {
        loss += bce_loss_from_logit(z.as_f64(), y).0;
        correct += usize::from(predict_label(sigmoid(z)) == y);
    }
    let n = labels.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Frozen-weight metrics recorded after each epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}
