//! Central finite-difference gradient checking.
//!
//! The numerical side never touches the autodiff graph: every perturbed
//! evaluation runs under [`no_grad`] on freshly built tensors.

use crate::error::Result;
use crate::nn::Parameters;
use crate::tensor::{no_grad, Tensor};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Magnitude below which a gradient counts as zero when forming the
/// relative error; central differences carry roughly `1e-11` absolute noise
/// at `h = 1e-5`.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// `(parameter name, element index, analytic, numeric)` of the worst element.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = self.max_rel_err.max(err);
            self.worst = Some((name.to_string(), index, analytic, numeric));
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Checks `d loss / d inputs` for a function of plain tensors.
pub fn check_fn<F>(f: F, inputs: &[Tensor], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let leaves: Vec<Tensor> = inputs
        .iter()
        .map(|t| Tensor::parameter(t.data().to_vec(), t.shape()))
        .collect::<Result<_>>()?;
    let grads = f(&leaves)?.backward()?;
    let mut report = GradCheckReport::default();
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = grads
            .get(leaf)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; leaf.len()]);
        for j in 0..leaf.len() {
            let eval = |delta: f64| -> Result<f64> {
                let perturbed: Vec<Tensor> = leaves
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        let mut data = t.data().to_vec();
                        if k == i {
                            data[j] += delta;
                        }
                        Tensor::new(data, t.shape())
                    })
                    .collect::<Result<_>>()?;
                no_grad(|| f(&perturbed))?.item()
            };
            let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
            report.record(&format!("input{i}"), j, analytic[j], numeric);
        }
    }
    Ok(report)
}

/// Checks every element of every parameter of `module` against
/// `loss(module)`. Parameters are swapped in and out in place.
pub fn check_module<M, F>(module: &mut M, loss: F, h: f64) -> Result<GradCheckReport>
where
    M: Parameters,
    F: Fn(&M) -> Result<Tensor>,
{
    module.zero_grad();
    loss(module)?.backward()?;
    let params = module.named_parameters();
    let mut report = GradCheckReport::default();
    for (name, param) in &params {
        let analytic = param.grad().unwrap_or_else(|| vec![0.0; param.len()]);
        for j in 0..param.len() {
            let mut eval = |delta: f64| -> Result<f64> {
                let mut data = param.data().to_vec();
                data[j] += delta;
                replace(module, name, param.with_data(data)?);
                let value = no_grad(|| loss(module))?.item();
                replace(module, name, param.clone());
                value
            };
            let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
            report.record(name, j, analytic[j], numeric);
        }
    }
    module.zero_grad();
    Ok(report)
}

fn replace<M: Parameters>(module: &mut M, target: &str, value: Tensor) {
    let mut value = Some(value);
    module.visit_mut("", &mut |name, t| {
        if name == target {
            if let Some(v) = value.take() {
                *t = v;
            }
        }
    });
}
