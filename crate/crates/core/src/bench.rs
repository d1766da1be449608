//! Inference runtime and accuracy as a function of frame stride.

use std::fmt::Write as _;
use std::time::Instant;

use crate::data::{stride_sample, VideoSample};
use crate::error::{Error, Result};
use crate::model::PainModel;

#[derive(Clone, Debug, PartialEq)]
pub struct StrideRow {
    pub stride: usize,
    pub frames: usize,
    /// Flattened length of the video feature, `frames · d`.
    pub feature_size: usize,
    pub accuracy: f64,
    pub runtime_mean_ms: f64,
    pub runtime_std_ms: f64,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// For each stride: accuracy over every sample, and wall-clock time of
/// `runs` timed inferences of the first sample after one warm-up run.
pub fn bench_inference(
    model: &PainModel,
    samples: &[VideoSample],
    strides: &[usize],
    runs: usize,
) -> Result<Vec<StrideRow>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Usage("benchmark needs at least one video".into()))?;
    if runs == 0 {
        return Err(Error::Param("benchmark needs at least one timed run".into()));
    }
    let d = model.spatial.config.outer_dim;
    let mut rows = Vec::with_capacity(strides.len());
    for &stride in strides {
        let timed = stride_sample(first, stride)?;
        model.logits(&timed.frames)?;
        let mut times = Vec::with_capacity(runs);
        for _ in 0..runs {
            let start = Instant::now();
            model.logits(&timed.frames)?;
            times.push(start.elapsed().as_secs_f64() * 1e3);
        }
        let mut correct = 0;
        for s in samples {
            let sub = stride_sample(s, stride)?;
            correct += usize::from(model.predict(&sub.frames)? == s.label);
        }
        let (mean, std) = mean_std(&times);
        rows.push(StrideRow {
            stride,
            frames: timed.frame_count(),
            feature_size: timed.frame_count() * d,
            accuracy: correct as f64 / samples.len() as f64,
            runtime_mean_ms: mean,
            runtime_std_ms: std,
        });
    }
    Ok(rows)
}

pub fn stride_table_csv(rows: &[StrideRow]) -> String {
    let mut out = String::from("stride,frames,feature_size,accuracy,runtime_mean_ms,runtime_std_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.3},{:.3}",
            r.stride, r.frames, r.feature_size, r.accuracy, r.runtime_mean_ms, r.runtime_std_ms
        );
    }
    out
}
