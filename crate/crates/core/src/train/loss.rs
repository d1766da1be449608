use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(1−ε)·onehot(label) + ε/K`.
pub fn smoothed_target(classes: usize, label: usize, eps: f64) -> Result<Vec<f64>> {
    if label >= classes {
        return Err(Error::Param(format!("label {label} outside 0..{classes}")));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::Param(format!("label smoothing {eps} outside [0, 1)")));
    }
    let mut q = vec![eps / classes as f64; classes];
    q[label] += 1.0 - eps;
    Ok(q)
}

/// `−Σ q·log softmax(logits)` against the smoothed target.
pub fn cross_entropy_smoothed(logits: &Tensor, label: usize, eps: f64) -> Result<Tensor> {
    if logits.rank() != 1 {
        return Err(Error::shape("cross_entropy", logits.shape(), &[label + 1]));
    }
    let q = Tensor::new(smoothed_target(logits.len(), label, eps)?, logits.shape())?;
    Ok(logits.log_softmax(0)?.mul(&q)?.sum().scale(-1.0))
}
