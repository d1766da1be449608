//! AdamW with decoupled weight decay.

use crate::error::{Error, Result};
use crate::nn::Parameters;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamWParams {
    fn default() -> Self {
        AdamWParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.1,
            max_grad_norm: None,
        }
    }
}

/// First and second moments per parameter, in traversal order.
#[derive(Clone, Debug, Default)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

/// Position tables, normalization parameters and biases are not decayed.
pub fn is_decayed(name: &str) -> bool {
    let leaf = name.rsplit('.').next().unwrap_or(name);
    !(leaf == "bias" || leaf.starts_with("pos_") || name.contains("norm"))
}

/// One AdamW step over every parameter of `module` using its accumulated
/// gradients (missing gradients count as zero). Nothing is updated if any
/// gradient is non-finite. With `max_grad_norm` set, all gradients are
/// scaled down together so their joint L2 norm does not exceed it.
pub fn adamw_step<M: Parameters + ?Sized>(
    module: &mut M,
    state: &mut OptimizerState,
    lr: f64,
    opt: &AdamWParams,
) -> Result<()> {
    let params = module.named_parameters();
    let mut grads = Vec::with_capacity(params.len());
    for (name, p) in &params {
        let g = p.grad().unwrap_or_else(|| vec![0.0; p.len()]);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name.clone()));
        }
        grads.push(g);
    }
    if let Some(limit) = opt.max_grad_norm {
        let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if norm > limit {
            let factor = limit / norm;
            grads.iter_mut().flatten().for_each(|g| *g *= factor);
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() || state.m.iter().zip(&params).any(|(m, (_, p))| m.len() != p.len()) {
        return Err(Error::Usage("optimizer state does not match the parameter set".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);

    let mut index = 0;
    module.visit_mut("", &mut |name, p| {
        let (m, v, g) = (&mut state.m[index], &mut state.v[index], &grads[index]);
        index += 1;
        let decay = if is_decayed(name) { lr * opt.weight_decay } else { 0.0 };
        let data: Vec<f64> = p
            .data()
            .iter()
            .enumerate()
            .map(|(i, &theta)| {
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + opt.eps);
                theta - decay * theta - lr * update
            })
            .collect();
        *p = p.with_data(data).expect("same length");
    });
    Ok(())
}
