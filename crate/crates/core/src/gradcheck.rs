//! Central finite-difference gradient checking in `f64`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative errors use `max(|analytic|, |numeric|, REL_ERROR_FLOOR)` as the
/// denominator so that exactly-zero gradients compare absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// A scalar function of a list of tensors with an analytic gradient.
pub trait Objective {
    fn loss(&self, params: &[Tensor<f64>]) -> Result<f64>;
    fn gradient(&self, params: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>>;
}

/// Closure pair adapter for [`Objective`].
pub struct FnObjective<L, G> {
    pub loss: L,
    pub gradient: G,
}

impl<L, G> Objective for FnObjective<L, G>
where
    L: Fn(&[Tensor<f64>]) -> Result<f64>,
    G: Fn(&[Tensor<f64>]) -> Result<Vec<Tensor<f64>>>,
{
    fn loss(&self, params: &[Tensor<f64>]) -> Result<f64> {
        (self.loss)(params)
    }
    fn gradient(&self, params: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>> {
        (self.gradient)(params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_relative_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the analytic gradient of `objective` at `params` against
/// `(f(θ+ε) - f(θ-ε)) / 2ε` for every element of every named tensor.
pub fn gradcheck<O: Objective + ?Sized>(
    objective: &O,
    names: &[&str],
    params: &[Tensor<f64>],
    epsilon: f64,
) -> Result<GradcheckReport> {
    if !(epsilon > 0.0 && epsilon <= 0.1) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0, 0.1], got {epsilon}"
        )));
    }
    if names.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "{} names for {} tensors",
            names.len(),
            params.len()
        )));
    }
    let analytic = objective.gradient(params)?;
    if analytic.len() != params.len() {
        return Err(Error::Shape(format!(
            "objective returned {} gradients for {} tensors",
            analytic.len(),
            params.len()
        )));
    }
    let mut report = GradcheckReport {
        max_relative_error: 0.0,
        worst_param: names.first().map(|s| s.to_string()).unwrap_or_default(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = params.to_vec();
    for (k, name) in names.iter().enumerate() {
        if analytic[k].shape() != params[k].shape() {
            return Err(Error::Shape(format!(
                "gradient for `{name}` has shape {:?}, parameter has {:?}",
                analytic[k].shape(),
                params[k].shape()
            )));
        }
        for i in 0..params[k].len() {
            let original = params[k].data()[i];
            probe[k].data_mut()[i] = original + epsilon;
            let plus = objective.loss(&probe)?;
            probe[k].data_mut()[i] = original - epsilon;
            let minus = objective.loss(&probe)?;
            probe[k].data_mut()[i] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss while perturbing `{name}`[{i}]"
                )));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[k].data()[i];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.checked == 1 {
                report = GradcheckReport {
                    max_relative_error: err,
                    worst_param: name.to_string(),
                    worst_index: i,
                    analytic: a,
                    numeric,
                    checked: report.checked,
                };
            }
        }
    }
    Ok(report)
}
