//! Central finite-difference gradient oracle (double precision only).

use rand::Rng;

use super::{Layer, Mode};
use crate::error::Result;
use crate::tensor::Tensor;

/// Perturbation used for central differences.
pub const STEP: f64 = 1e-5;

/// Denominator floor so that gradients that are zero on both sides compare as equal.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Label of the worst coordinate, e.g. `"input[3]"` or `"conv1.weight[10]"`.
    pub worst: String,
    pub checked: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        Self {
            max_rel_error: 0.0,
            worst: String::new(),
            checked: 0,
        }
    }

    pub fn merge(mut self, other: GradCheckReport) -> Self {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self
    }

    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        if self.checked == 0 || err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst = label();
        }
        self.checked += 1;
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `f` around `x`.
pub fn check_gradient(
    name: &str,
    x: &[f64],
    analytic: &[f64],
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::empty();
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + STEP;
        let up = f(&probe)?;
        probe[i] = orig - STEP;
        let down = f(&probe)?;
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        report.record(|| format!("{name}[{i}]"), analytic[i], numeric);
    }
    Ok(report)
}

/// Gradient check of a single layer under the scalar loss `sum(out * R)` with random `R`.
///
/// Both the input gradient and every parameter gradient are checked.
pub fn check_layer<L: Layer<f64>, R: Rng + ?Sized>(
    layer: &mut L,
    input: &Tensor<f64>,
    mode: Mode,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let out = layer.forward(input, mode)?;
    let proj = Tensor::<f64>::randn(out.shape(), 1.0, rng);
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let grad_in = layer.backward(&proj)?;
    let analytic_params: Vec<(String, Vec<f64>, Vec<f64>)> = layer
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.data().to_vec(), p.grad.data().to_vec()))
        .collect();

    let score = |out: &Tensor<f64>| -> f64 {
        out.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
    };

    let mut report = check_gradient("input", input.data(), grad_in.data(), |x| {
        let t = Tensor::new(input.shape().to_vec(), x.to_vec())?;
        Ok(score(&layer.forward(&t, mode)?))
    })?;

    for (idx, (name, values, grads)) in analytic_params.iter().enumerate() {
        let r = check_gradient(name, values, grads, |x| {
            layer.params_mut()[idx].value.data_mut().copy_from_slice(x);
            Ok(score(&layer.forward(input, mode)?))
        })?;
        layer.params_mut()[idx]
            .value
            .data_mut()
            .copy_from_slice(values);
        report = report.merge(r);
    }
    Ok(report)
}
