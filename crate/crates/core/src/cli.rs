//! Command-line front end. Data rows go to stdout, summaries and errors to
//! stderr. Exit status: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::data::image::load_image;
use crate::data::manifest::{read_manifest, write_manifest, Split};
use crate::data::prepare::{prepare, PrepareConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate_with, fmt_metric, metrics_from_matrix, EvalOptions};
use crate::layers::sigmoid;
use crate::loss::{predict_label, EpochMetrics, Label};
use crate::model::{sample_forward, Architecture};
use crate::model_io::{load_model, save_model};
use crate::train::{run_replicates, write_history_csv, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "debrisnet", version, about = "Classify underwater images as aquatic life or debris")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a sample manifest from an image directory
    Prepare(PrepareArgs),
    /// Train one or more models from a manifest
    Train(TrainArgs),
    /// Evaluate a model on one split of a manifest
    Eval(EvalArgs),
    /// Classify individual images
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Root containing animals/, litter/ and optionally test/{animals,litter}
    #[arg(long)]
    pub data: PathBuf,
    /// Manifest file to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Quarter-turn rotations added per image (1..=n)
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=3))]
    pub augment_rotations: u8,
    /// Random crops added per image
    #[arg(long, default_value_t = 0)]
    pub augment_crops: usize,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
}

#[derive(Debug, Args)]
pub struct ArchArgs {
    /// Input side length in pixels
    #[arg(long, default_value_t = 140, value_parser = clap::value_parser!(u32).range(1..))]
    pub image_size: u32,
    /// Filters per convolution
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u32).range(1..))]
    pub filters: u32,
}

impl ArchArgs {
    fn architecture(&self) -> Architecture {
        Architecture {
            input_size: self.image_size as usize,
            filters: self.filters as usize,
            ..Architecture::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model file to write; replicate i writes <out>.r<i> when --replicates > 1
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 95, value_parser = clap::value_parser!(u32).range(1..))]
    pub epochs: u32,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u32).range(1..))]
    pub batch_size: u32,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub replicates: u32,
    /// Per-epoch metrics CSV; suffixed like --out when replicated
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub arch: ArchArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Leave unreadable images out of the counts instead of failing
    #[arg(long)]
    pub skip_unreadable: bool,
    #[command(flatten)]
    pub arch: ArchArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
    #[command(flatten)]
    pub arch: ArchArgs,
}

/// `<path>.r<i>`, appended to the full file name.
pub fn replicate_path(path: &Path, i: usize) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(format!(".r{i}"));
    PathBuf::from(s)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Prepare(a) => cmd_prepare(&a, err),
        Command::Train(a) => cmd_train(&a, out, err),
        Command::Eval(a) => cmd_eval(&a, out, err),
        Command::Predict(a) => cmd_predict(&a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn w(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

fn cmd_prepare(a: &PrepareArgs, err: &mut dyn Write) -> Result<i32> {
    let config = PrepareConfig {
        seed: a.seed,
        rotations: a.augment_rotations,
        crops: a.augment_crops,
        val_fraction: a.val_fraction,
    };
    let manifest = prepare(&a.data, &config)?;
    write_manifest(&manifest, &a.out)?;
    for split in Split::ALL {
        let animals = manifest.count(split, Label::Animal);
        let litter = manifest.count(split, Label::Litter);
        writeln!(err, "{split}: animals={animals} litter={litter}").map_err(w)?;
    }
    writeln!(err, "wrote {}", a.out.display()).map_err(w)?;
    Ok(EXIT_OK)
}

fn metrics_row(m: &EpochMetrics) -> String {
    format!(
        "train_loss={:.2}\ttrain_acc={:.2}\tval_loss={:.2}\tval_acc={:.2}",
        m.train_loss, m.train_acc, m.val_loss, m.val_acc
    )
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let manifest = read_manifest(&a.manifest)?;
    let arch = a.arch.architecture();
    let config = TrainConfig {
        epochs: a.epochs as usize,
        batch_size: a.batch_size as usize,
        lr: a.lr,
        seed: a.seed,
        replicates: a.replicates as usize,
        image_size: arch.input_size,
        filters: arch.filters,
        ..TrainConfig::default()
    };
    config.validate()?;
    let (runs, means) = run_replicates(&config, &manifest, config.replicates)?;
    let replicated = runs.len() > 1;
    for (i, run) in runs.iter().enumerate() {
        let model_path = if replicated { replicate_path(&a.out, i) } else { a.out.clone() };
        save_model(&run.params, &model_path)?;
        if let Some(h) = &a.history {
            let path = if replicated { replicate_path(h, i) } else { h.clone() };
            write_history_csv(&run.history.epochs, &path)?;
        }
        writeln!(out, "r{i}\tseed={}\t{}", run.history.seed, metrics_row(run.history.last())).map_err(w)?;
        writeln!(
            err,
            "run {i}: {} epochs in {:.1}s, wrote {}",
            run.history.epochs.len(),
            run.history.duration.as_secs_f64(),
            model_path.display()
        )
        .map_err(w)?;
    }
    if replicated {
        let [tl, vl, ta, va] = means.rounded();
        writeln!(
            out,
            "mean\ttrain_loss={tl:.2}\ttrain_acc={ta:.2}\tval_loss={vl:.2}\tval_acc={va:.2}"
        )
        .map_err(w)?;
    }
    Ok(EXIT_OK)
}

fn csv_metric(m: Option<f64>) -> String {
    m.map_or_else(String::new, |v| format!("{v:.6}"))
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let params = load_model(&a.model, a.arch.architecture())?;
    let manifest = read_manifest(&a.manifest)?;
    let split = Split::from(a.split);
    let samples: Vec<_> = manifest.samples(split).into_iter().cloned().collect();
    if samples.is_empty() {
        return Err(Error::Dataset(format!(
            "split {split} is empty in {}",
            a.manifest.display()
        )));
    }
    let options = EvalOptions {
        skip_unreadable: a.skip_unreadable,
    };
    let report = evaluate_with(&params, &samples, options)?;
    for (path, reason) in &report.skipped {
        writeln!(err, "skipped {}: {reason}", path.display()).map_err(w)?;
    }
    let cm = report.matrix;
    let m = metrics_from_matrix(&cm)?;
    match a.format {
        Format::Table => {
            writeln!(out, "{cm}").map_err(w)?;
            writeln!(out, "accuracy\t{:.2}", m.accuracy).map_err(w)?;
            writeln!(out, "precision\t{}", fmt_metric(m.precision)).map_err(w)?;
            writeln!(out, "recall\t{}", fmt_metric(m.recall)).map_err(w)?;
            writeln!(out, "hazard_rate\t{}", fmt_metric(m.hazard_rate)).map_err(w)?;
        }
        Format::Csv => {
            writeln!(out, "tp,fn,fp,tn,accuracy,precision,recall,hazard_rate").map_err(w)?;
            writeln!(
                out,
                "{},{},{},{},{:.6},{},{},{}",
                cm.tp,
                cm.fn_,
                cm.fp,
                cm.tn,
                m.accuracy,
                csv_metric(m.precision),
                csv_metric(m.recall),
                csv_metric(m.hazard_rate)
            )
            .map_err(w)?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let params = load_model(&a.model, a.arch.architecture())?;
    let size = params.arch().input_size;
    let results: Vec<Result<f32>> = a
        .images
        .par_iter()
        .map(|path| {
            let image = load_image(path, size)?;
            Ok(sigmoid(sample_forward(&params, &image, false)?.0))
        })
        .collect();
    let mut failed = 0;
    for (path, r) in a.images.iter().zip(results) {
        match r {
            Ok(p) => writeln!(out, "{}\t{p:.6}\t{}", path.display(), predict_label(p)).map_err(w)?,
            Err(e) => {
                failed += 1;
                writeln!(err, "error: {e}").map_err(w)?;
            }
        }
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}
