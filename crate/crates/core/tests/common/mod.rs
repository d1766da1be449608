//! Shared fixtures for the integration and acceptance tests.
#![allow(dead_code)]

use pain_tnt::config::RunConfig;
use pain_tnt::data::Task;
use pain_tnt::spatial::{Pooling, SpatialConfig};
use pain_tnt::temporal::TemporalConfig;
use pain_tnt::train::TrainConfig;
use pain_tnt::{Rng, Tensor};

/// Subjects held out by the learning smoke test.
pub const HELD_OUT: [usize; 2] = [4, 5];

/// Scaled-down model for 32×32 synthetic frames.
pub fn smoke_config(task: Task, seed: u64) -> RunConfig {
    RunConfig {
        spatial: SpatialConfig {
            image_size: 32,
            patch_size: 8,
            subpatch_size: 4,
            outer_dim: 32,
            inner_dim: 8,
            depth: 2,
            outer_heads: 2,
            inner_heads: 2,
            mlp_ratio: 2.0,
            ..SpatialConfig::default()
        },
        temporal: TemporalConfig {
            feature_dim: 32,
            latent_count: 8,
            latent_dim: 32,
            self_heads: 4,
            fourier_bands: 4,
            mlp_ratio: 2.0,
            ..TemporalConfig::default()
        },
        train: TrainConfig {
            epochs: 30,
            lr: 3e-4,
            warmup_epochs: 3,
            weight_decay: 0.05,
            batch_size: 8,
            seed,
            ..TrainConfig::default()
        },
    }
    .for_task(task)
}

/// Tiny model for 16×16 frames and at least 3 frames per video.
pub fn toy_config(task: Task, epochs: usize, seed: u64) -> RunConfig {
    RunConfig {
        spatial: SpatialConfig {
            image_size: 16,
            patch_size: 8,
            subpatch_size: 4,
            outer_dim: 16,
            inner_dim: 4,
            depth: 1,
            outer_heads: 2,
            inner_heads: 2,
            mlp_ratio: 2.0,
            ..SpatialConfig::default()
        },
        temporal: TemporalConfig {
            feature_dim: 16,
            latent_count: 2,
            latent_dim: 16,
            self_heads: 2,
            self_blocks: 1,
            fourier_bands: 2,
            mlp_ratio: 2.0,
            ..TemporalConfig::default()
        },
        train: TrainConfig {
            epochs,
            warmup_epochs: 1,
            batch_size: 4,
            seed,
            ..TrainConfig::default()
        },
    }
    .for_task(task)
}

/// A small valid model configuration drawn from `rng`.
pub fn random_valid_config(rng: &mut Rng) -> (SpatialConfig, TemporalConfig) {
    let s = 1 + rng.below(2);
    let q = 1 + rng.below(3);
    let p = s * q;
    let inner_heads = 1 + rng.below(2);
    let c = inner_heads * (1 + rng.below(2));
    let d = q * q * c;
    let divisors: Vec<usize> = (1..=d.min(4)).filter(|h| d.is_multiple_of(*h)).collect();
    let spatial = SpatialConfig {
        image_size: p * (1 + rng.below(3)),
        patch_size: p,
        subpatch_size: s,
        outer_dim: d,
        inner_dim: c,
        depth: 1 + rng.below(3),
        outer_heads: divisors[rng.below(divisors.len())],
        inner_heads,
        mlp_ratio: [1.0, 1.5, 2.0, 4.0][rng.below(4)],
        pooling: if rng.below(2) == 0 {
            Pooling::ClassToken
        } else {
            Pooling::Mean
        },
        ..SpatialConfig::default()
    };
    let self_heads = 1 + rng.below(3);
    let temporal = TemporalConfig {
        feature_dim: d,
        latent_count: 1 + rng.below(4),
        latent_dim: self_heads * (1 + rng.below(4)),
        self_heads,
        cross_heads: 1,
        self_blocks: rng.below(3),
        fourier_bands: 1 + rng.below(4),
        mlp_ratio: [1.0, 2.0, 3.0][rng.below(3)],
        num_classes: 2 + rng.below(4),
        ..TemporalConfig::default()
    };
    (spatial, temporal)
}

pub fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.normal()).collect(), shape).unwrap()
}

pub fn random_frame(size: usize, rng: &mut Rng) -> Tensor {
    Tensor::new((0..size * size * 3).map(|_| rng.uniform()).collect(), &[size, size, 3]).unwrap()
}

/// Plain-loop multi-head attention: per head, project, score, softmax, mix;
/// then concatenate heads and apply the output projection.
pub fn naive_attention(
    queries: &[f64],
    context: &[f64],
    lq: usize,
    lk: usize,
    params: &pain_tnt::attention::AttentionParams,
) -> Vec<f64> {
    fn project(x: &[f64], rows: usize, w: &pain_tnt::nn::Linear) -> Vec<f64> {
        let (i, o) = (w.input_dim(), w.output_dim());
        let (wd, bd) = (w.weight.data(), w.bias.data());
        let mut out = vec![0.0; rows * o];
        for r in 0..rows {
            for c in 0..o {
                let mut acc = bd[c];
                for k in 0..i {
                    acc += x[r * i + k] * wd[k * o + c];
                }
                out[r * o + c] = acc;
            }
        }
        out
    }
    let d = params.model_dim;
    let dh = d / params.heads;
    let q = project(queries, lq, &params.w_q);
    let k = project(context, lk, &params.w_k);
    let v = project(context, lk, &params.w_v);
    let mut mixed = vec![0.0; lq * d];
    for h in 0..params.heads {
        for i in 0..lq {
            let scores: Vec<f64> = (0..lk)
                .map(|j| {
                    (0..dh)
                        .map(|t| q[i * d + h * dh + t] * k[j * d + h * dh + t])
                        .sum::<f64>()
                        / (dh as f64).sqrt()
                })
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exp.iter().sum();
            for t in 0..dh {
                mixed[i * d + h * dh + t] = (0..lk).map(|j| exp[j] / z * v[j * d + h * dh + t]).sum();
            }
        }
    }
    project(&mixed, lq, &params.w_o)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}
