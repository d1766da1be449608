//! Training recipe: AdamW with warmup plus cosine decay, label-smoothed
//! cross-entropy, per-video augmentation and the epoch loop.

mod augment;
mod loss;
mod optim;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::VideoSample;
use crate::error::{Error, Result};
use crate::model::{argmax, PainModel};
use crate::nn::{Mode, Parameters};
use crate::tensor::{Rng, Tensor};

pub use augment::{augment_video, trivial_augment, AugmentOp};
pub use loss::{cross_entropy_smoothed, smoothed_target};
pub use optim::{adamw_step, is_decayed, AdamWParams, OptimizerState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub label_smoothing: f64,
    pub drop_path_p: f64,
    pub attn_dropout_p: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Apply the random frame augmentation to training videos.
    pub augment: bool,
    /// Global gradient-norm ceiling; `None` leaves gradients untouched.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.1,
            warmup_epochs: 5,
            label_smoothing: 0.1,
            drop_path_p: 0.1,
            attn_dropout_p: 0.1,
            batch_size: 8,
            seed: 0,
            augment: true,
            max_grad_norm: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("train: {msg}")));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch size must be positive".into());
        }
        if self.warmup_epochs >= self.epochs {
            return fail(format!(
                "warmup {} must be shorter than {} epochs",
                self.warmup_epochs, self.epochs
            ));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return fail(format!("label smoothing {} outside [0, 1)", self.label_smoothing));
        }
        for (name, p) in [
            ("drop_path_p", self.drop_path_p),
            ("attn_dropout_p", self.attn_dropout_p),
        ] {
            if !(0.0..1.0).contains(&p) {
                return fail(format!("{name} {p} outside [0, 1)"));
            }
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) || !(self.eps > 0.0) {
            return fail("lr and weight decay must be non-negative, eps positive".into());
        }
        if self.max_grad_norm.is_some_and(|c| !(c > 0.0)) {
            return fail("max_grad_norm must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("betas must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWParams {
        AdamWParams {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
            max_grad_norm: self.max_grad_norm,
        }
    }

    pub fn train_mode(&self) -> Mode {
        Mode::train(self.drop_path_p, self.attn_dropout_p)
    }
}

/// Learning rate for `epoch`: linear warmup to `lr` over `warmup_epochs`,
/// then half-cosine decay to 0 at `epochs`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::Param(format!("epoch {epoch} outside 0..{}", cfg.epochs)));
    }
    let (e, w, total) = (epoch as f64, cfg.warmup_epochs as f64, cfg.epochs as f64);
    if epoch < cfg.warmup_epochs {
        return Ok(cfg.lr * (e + 1.0) / w);
    }
    let progress = (e - w) / (total - w);
    Ok((cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())).max(0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// `epoch,lr,train_loss,train_acc,val_acc`; `val_acc` is empty when no
    /// validation set was given.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,train_acc,val_acc\n");
        for r in &self.epochs {
            let val = r.val_acc.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", r.epoch, r.lr, r.train_loss, r.train_acc, val);
        }
        out
    }
}

/// Fraction of `samples` whose argmax prediction matches the label.
pub fn accuracy(model: &PainModel, samples: &[VideoSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for s in samples {
        correct += usize::from(model.predict(&s.frames)? == s.label);
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Runs the full epoch loop in place. Every random draw comes from streams
/// derived from `cfg.seed`, so equal inputs give bitwise-equal results.
pub fn fit(
    model: &mut PainModel,
    train: &[VideoSample],
    val: Option<&[VideoSample]>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainLog> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Usage("training set is empty".into()));
    }
    let classes = model.num_classes();
    if let Some(s) = train.iter().chain(val.unwrap_or_default()).find(|s| s.label >= classes) {
        return Err(Error::Param(format!("label {} outside 0..{classes}", s.label)));
    }
    let root = Rng::new(cfg.seed).derive(0x7472_6169_6e);
    let opt = cfg.adamw();
    let mode = cfg.train_mode();
    let mut state = OptimizerState::default();
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg)?;
        let erng = root.derive(epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        erng.derive(u64::MAX).shuffle(&mut order);

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let mut rng = erng.derive(i as u64);
                let sample = &train[i];
                let frames = if cfg.augment {
                    augment_video(&sample.frames, &mut rng)
                } else {
                    sample.frames.clone()
                };
                let logits = model.forward_video(&frames, mode, &mut rng)?;
                let loss = cross_entropy_smoothed(&logits, sample.label, cfg.label_smoothing)?;
                loss.scale(scale).backward()?;
                loss_sum += loss.item()?;
                correct += usize::from(argmax(logits.data()) == sample.label);
            }
            adamw_step(model, &mut state, lr, &opt)?;
        }
        model.zero_grad();

        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_acc: val.map(|v| accuracy(model, v)).transpose()?,
        };
        on_epoch(&record);
        log.epochs.push(record);
    }
    Ok(log)
}

/// Mean smoothed loss of `samples` in evaluation mode.
pub fn mean_loss(model: &PainModel, samples: &[VideoSample], eps: f64) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let logits = Tensor::new(model.logits(&s.frames)?, &[model.num_classes()])?;
        total += cross_entropy_smoothed(&logits, s.label, eps)?.item()?;
    }
    Ok(total / samples.len().max(1) as f64)
}
