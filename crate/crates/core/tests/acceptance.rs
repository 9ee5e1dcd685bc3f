//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances and time limits are the constants below.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use debrisnet::data::manifest::{Sample, Split};
use debrisnet::data::prepare::{prepare, PrepareConfig};
use debrisnet::data::split::val_target;
use debrisnet::data::write_manifest;
use debrisnet::eval::{evaluate_with, metrics_from_matrix, Classifier, EvalOptions};
use debrisnet::gradcheck::{gradcheck, FnObjective};
use debrisnet::layers::{
    conv2d_backward, conv2d_forward, logit_head_backward, logit_head_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, sigmoid, ConvSpec,
};
use debrisnet::loss::bce_loss_from_logit;
use debrisnet::model::{sample_backward, sample_forward, Architecture, ModelParams};
use debrisnet::model_io::save_model;
use debrisnet::optim::{AdamConfig, AdamState};
use debrisnet::train::{history_csv, replicate_means, train, TrainConfig};
use debrisnet::{EpochMetrics, Label, Result, Rng, Tensor};

const LAYER_GRAD_TOL: f64 = 1e-4;
const MODEL_GRAD_TOL: f64 = 1e-3;
const FD_EPSILON: f64 = 1e-6;
const LAYER_INSTANCES: usize = 20;
const CONV_ORACLE_TOL: f32 = 1e-5;
const CONV_MAX_EXTENT: usize = 8;
const ADAM_ORACLE_TOL: f64 = 1e-9;
const ADAM_TARGET: f64 = 0.05;
/// Value after 100 steps, recorded from a separate scripted run of the
/// same recurrence.
const ADAM_THETA_100: f64 = 0.002936675681102549;
const MEAN_TOL: f64 = 1e-9;
const OVERFIT_EPOCHS: usize = 50;

type Check = Box<dyn FnOnce(&mut Shared) -> std::result::Result<String, String>>;

/// State shared between criteria that reuse one training run.
#[derive(Default)]
struct Shared {
    run_a: Option<(Vec<u8>, String, Vec<EpochMetrics>, Duration)>,
    /// Wall time of the run made under criterion 6.
    run_a_time: Duration,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

// 1 -----------------------------------------------------------------------

struct TableClassifier(HashMap<PathBuf, Label>);

impl Classifier for TableClassifier {
    fn classify(&self, sample: &Sample) -> Result<Label> {
        Ok(self.0[&sample.path])
    }
}

fn confusion_fixture(_: &mut Shared) -> std::result::Result<String, String> {
    let cells = [
        (Label::Animal, Label::Animal, 47),
        (Label::Animal, Label::Litter, 8),
        (Label::Litter, Label::Animal, 3),
        (Label::Litter, Label::Litter, 42),
    ];
    let mut samples = Vec::new();
    let mut table = HashMap::new();
    for (actual, predicted, n) in cells {
        for _ in 0..n {
            let path = PathBuf::from(format!("fixture/{}.png", samples.len()));
            table.insert(path.clone(), predicted);
            samples.push(Sample::original(path, actual));
        }
    }
    let report = e2s(evaluate_with(&TableClassifier(table), &samples, EvalOptions::default()))?;
    let cm = report.matrix;
    ensure((cm.tp, cm.fn_, cm.fp, cm.tn) == (47, 8, 3, 42), || format!("matrix {cm:?}"))?;
    let m = e2s(metrics_from_matrix(&cm))?;
    ensure(m.accuracy == 0.89, || format!("accuracy {}", m.accuracy))?;
    ensure(m.precision == Some(0.94), || format!("precision {:?}", m.precision))?;
    ensure(m.recall == Some(47.0 / 55.0), || format!("recall {:?}", m.recall))?;
    ensure(m.hazard_rate == Some(8.0 / 55.0), || format!("hazard {:?}", m.hazard_rate))?;
    Ok(format!(
        "accuracy {:.2}, precision {:.2}, recall {:.4}, hazard {:.4}",
        m.accuracy,
        m.precision.unwrap(),
        m.recall.unwrap(),
        m.hazard_rate.unwrap()
    ))
}

// 2 -----------------------------------------------------------------------

/// (train loss, validation loss, train accuracy, validation accuracy).
const TABLE_ROWS: [[f64; 4]; 10] = [
    [0.23, 0.56, 0.90, 0.72],
    [0.21, 0.55, 0.90, 0.73],
    [0.19, 0.67, 0.92, 0.73],
    [0.22, 0.52, 0.90, 0.75],
    [0.16, 0.55, 0.93, 0.77],
    [0.18, 0.84, 0.92, 0.67],
    [0.20, 0.73, 0.92, 0.74],
    [0.19, 0.57, 0.93, 0.75],
    [0.21, 0.64, 0.90, 0.73],
    [0.21, 0.63, 0.91, 0.74],
];
const TABLE_MEAN_ROW: [f64; 4] = [0.20, 0.63, 0.91, 0.73];
/// Column sums of the ten rows, added by hand.
const TABLE_COLUMN_SUMS: [f64; 4] = [2.00, 6.26, 9.13, 7.33];

fn replicate_fixture(_: &mut Shared) -> std::result::Result<String, String> {
    let finals: Vec<EpochMetrics> = TABLE_ROWS
        .iter()
        .enumerate()
        .map(|(i, r)| EpochMetrics {
            epoch: i + 1,
            train_loss: r[0],
            val_loss: r[1],
            train_acc: r[2],
            val_acc: r[3],
        })
        .collect();
    let means = e2s(replicate_means(&finals))?;
    let full = [means.train_loss, means.val_loss, means.train_acc, means.val_acc];
    for (i, (&got, &sum)) in full.iter().zip(&TABLE_COLUMN_SUMS).enumerate() {
        ensure((got - sum / 10.0).abs() <= MEAN_TOL, || {
            format!("column {i}: mean {got} vs hand sum {sum}/10")
        })?;
    }
    let rounded = means.rounded();
    ensure(rounded == TABLE_MEAN_ROW, || format!("rounded means {rounded:?}"))?;
    Ok(format!("means {rounded:?}"))
}

// 3 -----------------------------------------------------------------------

fn random_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| lo + (hi - lo) * rng.unit_f64()).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Values in `[-1, -0.05] ∪ [0.05, 1]`, away from the ReLU kink.
fn away_from_zero(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let mut t = random_tensor(rng, shape, 0.05, 1.0);
    for v in t.data_mut() {
        if rng.below(2) == 0 {
            *v = -*v;
        }
    }
    t
}

/// Shuffled, well-separated values so no 2x2 window has a near tie.
fn distinct_values(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 - n as f64 * 0.05).collect();
    rng.shuffle(&mut data);
    Tensor::from_vec(shape, data).unwrap()
}

fn layer_conv(rng: &mut Rng) -> Result<f64> {
    let k = 2 + rng.below(2);
    let (ci, co) = (1 + rng.below(3), 1 + rng.below(3));
    let (h, w) = (k + rng.below(4), k + rng.below(4));
    let shape: Vec<usize> = if rng.below(2) == 0 { vec![ci, h, w] } else { vec![2, ci, h, w] };
    let x = random_tensor(rng, &shape, -1.0, 1.0);
    let wt = random_tensor(rng, &[co, ci, k, k], -1.0, 1.0);
    let b = random_tensor(rng, &[co], -1.0, 1.0);
    let out_shape = conv2d_forward(&x, &ConvSpec::new(wt.clone(), b.clone())?)?.shape().to_vec();
    let r = random_tensor(rng, &out_shape, -1.0, 1.0);
    let obj = FnObjective {
        loss: |p: &[Tensor<f64>]| {
            let y = conv2d_forward(&p[0], &ConvSpec::new(p[1].clone(), p[2].clone())?)?;
            Ok(dot(&y, &r))
        },
        gradient: |p: &[Tensor<f64>]| {
            let g = conv2d_backward(&p[0], &ConvSpec::new(p[1].clone(), p[2].clone())?, &r)?;
            Ok(vec![g.input.expect("input gradient"), g.weights, g.bias])
        },
    };
    Ok(gradcheck(&obj, &["input", "weights", "bias"], &[x, wt, b], FD_EPSILON)?.max_relative_error)
}

fn layer_relu(rng: &mut Rng) -> Result<f64> {
    let shape = [1 + rng.below(3), 1 + rng.below(6), 1 + rng.below(6)];
    let x = away_from_zero(rng, &shape);
    let r = random_tensor(rng, &shape, -1.0, 1.0);
    let obj = FnObjective {
        loss: |p: &[Tensor<f64>]| Ok(dot(&relu_forward(&p[0]), &r)),
        gradient: |p: &[Tensor<f64>]| Ok(vec![relu_backward(&p[0], &r)?]),
    };
    Ok(gradcheck(&obj, &["input"], &[x], FD_EPSILON)?.max_relative_error)
}

fn layer_pool(rng: &mut Rng) -> Result<f64> {
    let shape = [1 + rng.below(3), 2 + rng.below(6), 2 + rng.below(6)];
    let x = distinct_values(rng, &shape);
    let out_shape = maxpool2x2_forward(&x)?.0.shape().to_vec();
    let r = random_tensor(rng, &out_shape, -1.0, 1.0);
    let obj = FnObjective {
        loss: |p: &[Tensor<f64>]| Ok(dot(&maxpool2x2_forward(&p[0])?.0, &r)),
        gradient: |p: &[Tensor<f64>]| {
            let (_, trace) = maxpool2x2_forward(&p[0])?;
            Ok(vec![maxpool2x2_backward(&trace, &r)?])
        },
    };
    Ok(gradcheck(&obj, &["input"], &[x], FD_EPSILON)?.max_relative_error)
}

/// Logit head followed by the logit-form cross-entropy.
fn layer_head(rng: &mut Rng) -> Result<f64> {
    let n = 1 + rng.below(16);
    let y = if rng.below(2) == 0 { Label::Animal } else { Label::Litter };
    let v = random_tensor(rng, &[n], -1.0, 1.0);
    let w = random_tensor(rng, &[n], -1.0, 1.0);
    let b = random_tensor(rng, &[1], -1.0, 1.0);
    let obj = FnObjective {
        loss: |p: &[Tensor<f64>]| Ok(bce_loss_from_logit(logit_head_forward(&p[0], &p[1], &p[2])?, y).0),
        gradient: |p: &[Tensor<f64>]| {
            let z = logit_head_forward(&p[0], &p[1], &p[2])?;
            let g = logit_head_backward(&p[0], &p[1], &p[2], bce_loss_from_logit(z, y).1)?;
            Ok(vec![g.input, g.weights, g.bias])
        },
    };
    Ok(gradcheck(&obj, &["input", "weights", "bias"], &[v, w, b], FD_EPSILON)?.max_relative_error)
}

/// Elementwise sigmoid with derivative `s (1 - s)`.
fn layer_sigmoid(rng: &mut Rng) -> Result<f64> {
    let n = 1 + rng.below(12);
    let x = random_tensor(rng, &[n], -8.0, 8.0);
    let r = random_tensor(rng, &[n], -1.0, 1.0);
    let obj = FnObjective {
        loss: |p: &[Tensor<f64>]| Ok(p[0].data().iter().zip(r.data()).map(|(&z, c)| sigmoid(z) * c).sum()),
        gradient: |p: &[Tensor<f64>]| {
            let g = p[0]
                .data()
                .iter()
                .zip(r.data())
                .map(|(&z, c)| {
                    let s = sigmoid(z);
                    c * s * (1.0 - s)
                })
                .collect();
            Ok(vec![Tensor::from_vec(p[0].shape(), g)?])
        },
    };
    Ok(gradcheck(&obj, &["input"], &[x], FD_EPSILON)?.max_relative_error)
}

fn model_gradcheck(arch: Architecture, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let mut params = ModelParams::<f64>::init(arch, &mut rng)?;
    for conv in params.conv.iter_mut() {
        conv.bias = random_tensor(&mut rng, conv.bias.shape(), 0.0, 0.1);
    }
    let images: Vec<Tensor<f64>> = (0..2)
        .map(|_| random_tensor(&mut rng, &arch.image_shape(), 0.0, 1.0))
        .collect();
    let labels = [Label::Animal, Label::Litter];
    let names: Vec<&str> = params.named().map(|(n, _)| n).collect();
    let tensors: Vec<Tensor<f64>> = params.tensors().iter().map(|t| (*t).clone()).collect();
    let obj = FnObjective {
        loss: |p: &[Tensor<f64>]| {
            let m = ModelParams::from_tensors(arch, p.to_vec())?;
            let mut total = 0.0;
            for (img, &y) in images.iter().zip(&labels) {
                total += bce_loss_from_logit(sample_forward(&m, img, false)?.0, y).0;
            }
            Ok(total / images.len() as f64)
        },
        gradient: |p: &[Tensor<f64>]| {
            let m = ModelParams::from_tensors(arch, p.to_vec())?;
            let mut acc = ModelParams::<f64>::zeros(arch)?;
            for (img, &y) in images.iter().zip(&labels) {
                let (z, trace) = sample_forward(&m, img, true)?;
                let dz = bce_loss_from_logit(z, y).1 / images.len() as f64;
                acc.accumulate(&sample_backward(&m, &trace.expect("trace"), dz)?)?;
            }
            Ok(acc.tensors().iter().map(|t| (*t).clone()).collect())
        },
    };
    Ok(gradcheck(&obj, &names, &tensors, FD_EPSILON)?.max_relative_error)
}

fn gradient_suite(_: &mut Shared) -> std::result::Result<String, String> {
    type Layer = fn(&mut Rng) -> Result<f64>;
    let layers: [(&str, Layer); 5] = [
        ("conv", layer_conv),
        ("relu", layer_relu),
        ("maxpool", layer_pool),
        ("head+bce", layer_head),
        ("sigmoid", layer_sigmoid),
    ];
    let mut notes = Vec::new();
    for (i, (name, f)) in layers.iter().enumerate() {
        let mut rng = Rng::new(1000 + i as u64);
        let mut worst = 0.0f64;
        for inst in 0..LAYER_INSTANCES {
            let err = e2s(f(&mut rng))?;
            ensure(err <= LAYER_GRAD_TOL, || format!("{name} instance {inst}: relative error {err:.3e}"))?;
            worst = worst.max(err);
        }
        notes.push(format!("{name} {worst:.1e}"));
    }
    // The 3x12x12 clone cannot hold 3/2/3 kernels (12 -> 10 -> 5 -> 4 -> 2
    // leaves no room for a 3x3 conv), so it uses 3/2/1; the 3x20x20 clone
    // is the smallest input that keeps the full kernel layout.
    let clones = [
        ("12x12 k3/2/1", Architecture { input_size: 12, channels: 3, filters: 4, kernels: [3, 2, 1] }),
        ("20x20 k3/2/3", Architecture { input_size: 20, channels: 3, filters: 3, kernels: [3, 2, 3] }),
    ];
    for (i, (name, arch)) in clones.into_iter().enumerate() {
        let err = e2s(model_gradcheck(arch, 77 + i as u64))?;
        ensure(err <= MODEL_GRAD_TOL, || format!("model {name}: relative error {err:.3e}"))?;
        notes.push(format!("model {name} {err:.1e}"));
    }
    Ok(notes.join(", "))
}

// 4 -----------------------------------------------------------------------

/// Direct loops over output channel, row, column and the kernel window.
fn naive_conv(x: &[f32], (c, h, w): (usize, usize, usize), wt: &[f32], b: &[f32], o: usize, k: usize) -> Vec<f32> {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut out = vec![0.0f32; o * oh * ow];
    for oc in 0..o {
        for y in 0..oh {
            for xx in 0..ow {
                let mut s = b[oc];
                for ic in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            s += x[(ic * h + y + ky) * w + xx + kx] * wt[((oc * c + ic) * k + ky) * k + kx];
                        }
                    }
                }
                out[(oc * oh + y) * ow + xx] = s;
            }
        }
    }
    out
}

fn conv_oracle(_: &mut Shared) -> std::result::Result<String, String> {
    let mut rng = Rng::new(4);
    let mut shapes = 0usize;
    let mut worst = 0.0f32;
    let e = CONV_MAX_EXTENT;
    for k in [2usize, 3] {
        for c in 1..=e {
            for o in 1..=e {
                for h in k..=e {
                    for w in k..=e {
                        let x: Vec<f32> = (0..c * h * w).map(|_| rng.unit_f32() * 2.0 - 1.0).collect();
                        let wt: Vec<f32> = (0..o * c * k * k).map(|_| rng.unit_f32() * 2.0 - 1.0).collect();
                        let b: Vec<f32> = (0..o).map(|_| rng.unit_f32() * 2.0 - 1.0).collect();
                        let spec = e2s(ConvSpec::new(
                            Tensor::from_vec(&[o, c, k, k], wt.clone()).unwrap(),
                            Tensor::from_vec(&[o], b.clone()).unwrap(),
                        ))?;
                        let input = Tensor::from_vec(&[c, h, w], x.clone()).unwrap();
                        let got = e2s(conv2d_forward(&input, &spec))?;
                        let want = naive_conv(&x, (c, h, w), &wt, &b, o, k);
                        ensure(got.shape() == [o, h - k + 1, w - k + 1], || {
                            format!("shape {:?} for c={c} o={o} h={h} w={w} k={k}", got.shape())
                        })?;
                        let d = got
                            .data()
                            .iter()
                            .zip(&want)
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0f32, f32::max);
                        ensure(d <= CONV_ORACLE_TOL, || {
                            format!("|delta| {d:.3e} for c={c} o={o} h={h} w={w} k={k}")
                        })?;
                        worst = worst.max(d);
                        shapes += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{shapes} shapes, max |delta| {worst:.1e}"))
}

// 5 -----------------------------------------------------------------------

fn shape_chain(_: &mut Shared) -> std::result::Result<String, String> {
    let arch = Architecture::default();
    let params = e2s(ModelParams::<f32>::init(arch, &mut Rng::new(5)))?;
    let mut rng = Rng::new(6);
    let data: Vec<f32> = (0..3 * 140 * 140).map(|_| rng.unit_f32()).collect();
    let image = Tensor::from_vec(&[3, 140, 140], data).unwrap();
    let (_, trace) = e2s(sample_forward(&params, &image, true))?;
    let observed = trace.expect("trace").shape_chain();
    let mut shapes = vec![observed.input.clone()];
    shapes.extend(observed.listed());
    let expected: Vec<Vec<usize>> = vec![
        vec![3, 140, 140],
        vec![32, 138, 138],
        vec![32, 69, 69],
        vec![32, 68, 68],
        vec![32, 34, 34],
        vec![32, 32, 32],
        vec![32, 16, 16],
        vec![8192],
        vec![1],
    ];
    ensure(shapes == expected, || format!("observed {shapes:?}"))?;
    // weights + biases per conv, then the head over 32 * 16 * 16 features
    let oracle = (3 * 3 * 3 * 32 + 32) + (32 * 2 * 2 * 32 + 32) + (32 * 3 * 3 * 32 + 32) + (32 * 16 * 16 + 1);
    ensure(oracle == 22_465, || format!("oracle {oracle}"))?;
    ensure(params.param_count() == oracle, || format!("model count {}", params.param_count()))?;
    ensure(e2s(arch.param_count())? == oracle, || "architecture count".into())?;
    Ok(format!("{} shapes, {} parameters", shapes.len(), oracle))
}

// 6, 7 ---------------------------------------------------------------------

fn fixture_run(seed: u64) -> std::result::Result<(Vec<u8>, String, Vec<EpochMetrics>, Duration), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (manifest, _) = common::overfit_fixture(dir.path());
    let config = TrainConfig {
        epochs: OVERFIT_EPOCHS,
        seed,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (params, history) = e2s(train(&config, &manifest))?;
    let elapsed = start.elapsed();
    let model_path = dir.path().join("model.bin");
    e2s(save_model(&params, &model_path))?;
    let bytes = fs::read(&model_path).map_err(|e| e.to_string())?;
    let csv_path = dir.path().join("history.csv");
    e2s(debrisnet::train::write_history_csv(&history.epochs, &csv_path))?;
    let csv = fs::read_to_string(&csv_path).map_err(|e| e.to_string())?;
    ensure(csv == history_csv(&history.epochs), || "history file differs from its rendering".into())?;
    Ok((bytes, csv, history.epochs, elapsed))
}

fn overfit(shared: &mut Shared) -> std::result::Result<String, String> {
    let run = fixture_run(7)?;
    let history = run.2.clone();
    shared.run_a_time = run.3;
    shared.run_a = Some(run);
    ensure(history.len() == OVERFIT_EPOCHS, || format!("{} epochs recorded", history.len()))?;
    let first = history.iter().position(|m| m.train_acc == 1.0);
    let last = history.last().unwrap();
    ensure(last.train_acc == 1.0, || format!("final train accuracy {}", last.train_acc))?;
    Ok(format!(
        "train accuracy 1.0 first at epoch {}, final train loss {:.2e}",
        first.unwrap() + 1,
        last.train_loss
    ))
}

fn determinism(shared: &mut Shared) -> std::result::Result<String, String> {
    let a = match shared.run_a.take() {
        Some(a) => a,
        None => fixture_run(7)?,
    };
    let b = fixture_run(7)?;
    ensure(a.0 == b.0, || "model files differ".into())?;
    ensure(a.1 == b.1, || "history CSVs differ".into())?;
    Ok(format!("{} model bytes and {} CSV bytes identical", a.0.len(), a.1.len()))
}

// 8 -----------------------------------------------------------------------

/// Plain scalar Adam, the textbook recurrence in f64.
fn textbook_adam(theta0: f64, lr: f64, steps: usize) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        let g = 2.0 * theta;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t as i32));
        let v_hat = v / (1.0 - b2.powi(t as i32));
        theta -= lr * m_hat / (v_hat.sqrt() + eps);
        out.push(theta);
    }
    out
}

fn adam_oracle(_: &mut Shared) -> std::result::Result<String, String> {
    let reference = textbook_adam(1.0, 0.1, 100);
    let mut theta = Tensor::from_vec(&[1], vec![1.0f64]).unwrap();
    let mut state = e2s(AdamState::<f64>::new(AdamConfig::with_lr(0.1), [&theta]))?;
    let mut worst = 0.0f64;
    for (step, &want) in reference.iter().enumerate() {
        let g = Tensor::from_vec(&[1], vec![2.0 * theta.data()[0]]).unwrap();
        e2s(state.step(&mut [&mut theta], &[&g]))?;
        let d = (theta.data()[0] - want).abs();
        ensure(d <= ADAM_ORACLE_TOL, || format!("step {}: {} vs {want}", step + 1, theta.data()[0]))?;
        worst = worst.max(d);
    }
    let last = theta.data()[0];
    ensure(last.abs() < ADAM_TARGET, || format!("|theta| = {}", last.abs()))?;
    ensure((last - ADAM_THETA_100).abs() <= ADAM_ORACLE_TOL, || format!("theta {last} vs recorded {ADAM_THETA_100}"))?;
    Ok(format!("theta after 100 steps {last:.6}, max step deviation {worst:.1e}"))
}

// 9 -----------------------------------------------------------------------

fn pipeline(_: &mut Shared) -> std::result::Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("corpus");
    // 40 images, deliberately unbalanced
    common::write_corpus(&root, 24, 16, 0);
    let config = PrepareConfig {
        seed: 11,
        rotations: 2,
        crops: 1,
        val_fraction: 0.1,
    };
    let out_a = dir.path().join("a.manifest");
    let out_b = dir.path().join("b.manifest");
    let m = e2s(prepare(&root, &config))?;
    e2s(write_manifest(&m, &out_a))?;
    e2s(write_manifest(&e2s(prepare(&root, &config))?, &out_b))?;
    let (a, b) = (fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap());
    ensure(a == b, || "manifests differ between reruns".into())?;

    let count = |s, l| m.count(s, l);
    let (ta, tl) = (count(Split::Train, Label::Animal), count(Split::Train, Label::Litter));
    let (va, vl) = (count(Split::Val, Label::Animal), count(Split::Val, Label::Litter));
    ensure(ta == tl && ta > 0, || format!("train classes {ta}/{tl}"))?;
    ensure(va == vl, || format!("val classes {va}/{vl}"))?;
    let per_class = ta + va;
    let target = val_target(config.val_fraction, per_class);
    let max_group = 1 + config.rotations as usize + config.crops;
    ensure(va >= target && va < target + max_group, || {
        format!("val per class {va}, target {target}")
    })?;

    let mut sides: BTreeMap<PathBuf, HashSet<Split>> = BTreeMap::new();
    for r in &m.records {
        sides.entry(r.sample.path.clone()).or_default().insert(r.split);
    }
    let leaks = sides.values().filter(|s| s.len() > 1).count();
    ensure(leaks == 0, || format!("{leaks} sources appear in both train and val"))?;
    Ok(format!("train {ta}/{tl}, val {va}/{vl}, {} bytes", a.len()))
}

fn main() -> ExitCode {
    let criteria: Vec<(u32, &str, Duration, Check)> = vec![
        (1, "confusion-matrix fixture", Duration::from_secs(1), Box::new(confusion_fixture)),
        (2, "replicate-mean fixture", Duration::from_secs(1), Box::new(replicate_fixture)),
        (3, "gradient suite", Duration::from_secs(120), Box::new(gradient_suite)),
        (4, "conv oracle sweep", Duration::from_secs(120), Box::new(conv_oracle)),
        (5, "shape chain and parameter count", Duration::from_secs(1), Box::new(shape_chain)),
        (6, "overfit smoke test", Duration::from_secs(300), Box::new(overfit)),
        (7, "determinism", Duration::from_secs(600), Box::new(determinism)),
        (8, "Adam oracle", Duration::from_secs(1), Box::new(adam_oracle)),
        (9, "pipeline invariants", Duration::from_secs(30), Box::new(pipeline)),
    ];
    let mut shared = Shared::default();
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = check(&mut shared);
        let mut elapsed = start.elapsed();
        if id == 7 {
            // criterion 7 covers both runs; the first ran under criterion 6
            elapsed += shared.run_a_time;
        }
        let result = match outcome {
            Ok(detail) if elapsed <= limit => Ok(detail),
            Ok(detail) => Err(format!("{detail}; took {:.2}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs())),
            Err(e) => Err(e),
        };
        match result {
            Ok(detail) => println!("PASS  {id}. {name} ({:.2}s): {detail}", elapsed.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("FAIL  {id}. {name} ({:.2}s): {e}", elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
