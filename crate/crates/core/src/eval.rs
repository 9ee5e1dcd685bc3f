//! Confusion matrices and the metrics derived from them.
//!
//! Animal is the positive class: `tp` counts animals predicted as animals,
//! `fn_` animals predicted as litter, `fp` litter predicted as animals and
//! `tn` litter predicted as litter.

use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::data::manifest::Sample;
use crate::error::{Error, Result};
use crate::layers::sigmoid;
use crate::loss::{predict_label, Label};
use crate::model::{sample_forward, ModelParams};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fn_: usize, fp: usize, tn: usize) -> Self {
        Self { tp, fn_, fp, tn }
    }

    pub fn record(&mut self, actual: Label, predicted: Label) {
        match (actual, predicted) {
            (Label::Animal, Label::Animal) => self.tp += 1,
            (Label::Animal, Label::Litter) => self.fn_ += 1,
            (Label::Litter, Label::Animal) => self.fp += 1,
            (Label::Litter, Label::Litter) => self.tn += 1,
        }
    }

    /// Tallies `(actual, predicted)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut cm = Self::default();
        for (a, p) in pairs {
            cm.record(a, p);
        }
        cm
    }

    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn actual_count(&self, label: Label) -> usize {
        match label {
            Label::Animal => self.tp + self.fn_,
            Label::Litter => self.fp + self.tn,
        }
    }

    pub fn predicted_count(&self, label: Label) -> usize {
        match label {
            Label::Animal => self.tp + self.fp,
            Label::Litter => self.fn_ + self.tn,
        }
    }
}

impl fmt::Display for ConfusionMatrix {
    /// Rows are actual classes, columns predicted classes, with margins.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = 18;
        writeln!(
            f,
            "{:<16}{:>w$}{:>w$}{:>8}",
            format!("n = {}", self.total()),
            "PREDICTED: Animal",
            "PREDICTED: Litter",
            ""
        )?;
        writeln!(
            f,
            "{:<16}{:>w$}{:>w$}{:>8}",
            "ACTUAL: Animal",
            format!("TP = {}", self.tp),
            format!("FN = {}", self.fn_),
            self.actual_count(Label::Animal)
        )?;
        writeln!(
            f,
            "{:<16}{:>w$}{:>w$}{:>8}",
            "ACTUAL: Litter",
            format!("FP = {}", self.fp),
            format!("TN = {}", self.tn),
            self.actual_count(Label::Litter)
        )?;
        write!(
            f,
            "{:<16}{:>w$}{:>w$}",
            "",
            self.predicted_count(Label::Animal),
            self.predicted_count(Label::Litter)
        )
    }
}

/// `None` marks a ratio whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Fraction of actual animals predicted as litter.
    pub hazard_rate: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics_from_matrix(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("confusion matrix is empty".into()));
    }
    Ok(Metrics {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        precision: ratio(cm.tp, cm.tp + cm.fp),
        recall: ratio(cm.tp, cm.tp + cm.fn_),
        hazard_rate: ratio(cm.fn_, cm.tp + cm.fn_),
    })
}

/// Formats an optional metric with two decimals, `undefined` for `None`.
pub fn fmt_metric(m: Option<f64>) -> String {
    m.map_or_else(|| "undefined".to_string(), |v| format!("{v:.2}"))
}

/// Anything that labels a sample.
pub trait Classifier: Sync {
    fn classify(&self, sample: &Sample) -> Result<Label>;
}

impl Classifier for ModelParams<f32> {
    fn classify(&self, sample: &Sample) -> Result<Label> {
        let image = sample.load(self.arch().input_size)?;
        let (z, _) = sample_forward(self, &image, false)?;
        Ok(predict_label(sigmoid(z)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Leave unreadable images out of the counts instead of failing.
    pub skip_unreadable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    pub matrix: ConfusionMatrix,
    /// Unreadable samples left out of `matrix`, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

fn is_unreadable(e: &Error) -> bool {
    matches!(e, Error::Io { .. } | Error::Image { .. })
}

/// Classifies `samples` in parallel and tallies them in input order.
pub fn evaluate_with<C: Classifier + ?Sized>(
    classifier: &C,
    samples: &[Sample],
    options: EvalOptions,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Dataset("no samples to evaluate".into()));
    }
    let outcomes: Vec<Result<Label>> = samples
        .par_iter()
        .map(|s| classifier.classify(s))
        .collect();
    let mut matrix = ConfusionMatrix::default();
    let mut skipped = Vec::new();
    let mut unreadable = Vec::new();
    for (sample, outcome) in samples.iter().zip(outcomes) {
        match outcome {
            Ok(predicted) => matrix.record(sample.label, predicted),
            Err(e) if is_unreadable(&e) => {
                unreadable.push(e.to_string());
                skipped.push((sample.path.clone(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if !unreadable.is_empty() && !options.skip_unreadable {
        return Err(Error::Dataset(format!(
            "{} unreadable image(s):\n  {}",
            unreadable.len(),
            unreadable.join("\n  ")
        )));
    }
    if matrix.total() == 0 {
        return Err(Error::Dataset("every sample was unreadable".into()));
    }
    Ok(EvalReport { matrix, skipped })
}

/// Confusion matrix of `params` on `samples`; any unreadable image is an error.
pub fn evaluate(params: &ModelParams<f32>, samples: &[Sample]) -> Result<ConfusionMatrix> {
    Ok(evaluate_with(params, samples, EvalOptions::default())?.matrix)
}
