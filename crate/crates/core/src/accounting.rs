//! Analytic parameter and FLOP counts.
//!
//! Convention: one multiply-accumulate is 2 FLOPs, so a `[a, k]·[k, b]`
//! product costs `2·a·k·b`; bias adds and residual adds cost one FLOP per
//! output element; softmax, layer norm and GELU are charged the fixed
//! per-element constants below. Dropout and drop path are inactive at
//! inference and cost nothing. The Fourier position features are treated as
//! precomputed constants.

use std::fmt;

use crate::attention::{score_flops, AttentionParams};
use crate::error::Result;
use crate::nn::Linear;
use crate::spatial::SpatialConfig;
use crate::temporal::TemporalConfig;

/// exp, running sum, divide.
pub const SOFTMAX_FLOPS_PER_ELEMENT: u64 = 3;
/// mean, variance, normalize, scale, shift.
pub const LAYER_NORM_FLOPS_PER_ELEMENT: u64 = 5;
pub const GELU_FLOPS_PER_ELEMENT: u64 = 8;

fn layer_norm_params(dim: usize) -> u64 {
    2 * dim as u64
}

fn linear_params(i: usize, o: usize) -> u64 {
    Linear::param_count(i, o) as u64
}

fn mlp_params(dim: usize, hidden: usize) -> u64 {
    linear_params(dim, hidden) + linear_params(hidden, dim)
}

/// Per-module parameter counts of the spatial encoder.
pub fn spatial_param_breakdown(cfg: &SpatialConfig) -> Vec<(String, u64)> {
    let (n, m, c, d) = (
        cfg.num_patches(),
        cfg.subpatches_per_patch(),
        cfg.inner_dim,
        cfg.outer_dim,
    );
    let embed = d as u64
        + ((n + 1) * d) as u64
        + (m * c) as u64
        + linear_params(cfg.patch_pixels(), d)
        + linear_params(cfg.subpatch_pixels(), c);
    let inner =
        2 * layer_norm_params(c) + AttentionParams::param_count(c, c) as u64 + mlp_params(c, cfg.inner_hidden());
    let injection = linear_params(m * c, d);
    let outer =
        2 * layer_norm_params(d) + AttentionParams::param_count(d, d) as u64 + mlp_params(d, cfg.outer_hidden());
    let depth = cfg.depth as u64;
    vec![
        ("spatial.embedding".into(), embed),
        ("spatial.inner_encoder".into(), depth * inner),
        ("spatial.injection".into(), depth * injection),
        ("spatial.outer_encoder".into(), depth * outer),
        ("spatial.final_norm".into(), layer_norm_params(d)),
    ]
}

/// Per-module parameter counts of the sequence encoder.
pub fn temporal_param_breakdown(cfg: &TemporalConfig) -> Vec<(String, u64)> {
    let big_d = cfg.latent_dim;
    let hidden = cfg.mlp_hidden();
    let cross =
        3 * layer_norm_params(big_d) + AttentionParams::param_count(big_d, big_d) as u64 + mlp_params(big_d, hidden);
    let block =
        2 * layer_norm_params(big_d) + AttentionParams::param_count(big_d, big_d) as u64 + mlp_params(big_d, hidden);
    vec![
        (
            "temporal.input_projection".into(),
            linear_params(cfg.feature_dim + cfg.position_dim(), big_d),
        ),
        ("temporal.latents".into(), (cfg.latent_count * big_d) as u64),
        ("temporal.cross_attention".into(), cross),
        ("temporal.latent_blocks".into(), cfg.self_blocks as u64 * block),
        (
            "temporal.head".into(),
            layer_norm_params(big_d) + linear_params(big_d, cfg.num_classes),
        ),
    ]
}

/// Total trainable elements of the model built from these configs.
pub fn count_params(spatial: &SpatialConfig, temporal: &TemporalConfig) -> Result<u64> {
    spatial.validate()?;
    temporal.validate()?;
    Ok(spatial_param_breakdown(spatial)
        .iter()
        .chain(&temporal_param_breakdown(temporal))
        .map(|(_, v)| v)
        .sum())
}

/// FLOPs of `y = x·W + b` over `rows` rows.
pub fn linear_flops(rows: usize, input: usize, output: usize) -> u64 {
    let (r, i, o) = (rows as u64, input as u64, output as u64);
    2 * r * i * o + r * o
}

fn layer_norm_flops(elements: usize) -> u64 {
    LAYER_NORM_FLOPS_PER_ELEMENT * elements as u64
}

fn mlp_flops(rows: usize, dim: usize, hidden: usize) -> u64 {
    linear_flops(rows, dim, hidden) + GELU_FLOPS_PER_ELEMENT * (rows * hidden) as u64 + linear_flops(rows, hidden, dim)
}

/// Multi-head attention of `batch` independent sequences, excluding the
/// score products, which [`attention_score_flops`] reports.
fn attention_rest_flops(batch: usize, lq: usize, lk: usize, dim: usize, heads: usize) -> u64 {
    let b = batch as u64;
    let scores = b * (heads * lq * lk) as u64;
    linear_flops(batch * lq, dim, dim)
        + 2 * linear_flops(batch * lk, dim, dim)
        + scores // 1/√d_k scaling
        + SOFTMAX_FLOPS_PER_ELEMENT * scores
        + b * score_flops(lq, lk, dim) // weights · values
        + linear_flops(batch * lq, dim, dim)
}

fn attention_score_flops(batch: usize, lq: usize, lk: usize, dim: usize) -> u64 {
    batch as u64 * score_flops(lq, lk, dim)
}

/// Per-module FLOPs for one frame through the spatial encoder.
pub fn spatial_frame_flops(cfg: &SpatialConfig) -> Vec<(String, u64)> {
    let (n, m, c, d) = (
        cfg.num_patches(),
        cfg.subpatches_per_patch(),
        cfg.inner_dim,
        cfg.outer_dim,
    );
    let t = n + 1;
    let (hc, hd) = (cfg.inner_hidden(), cfg.outer_hidden());
    let embed = linear_flops(n, cfg.patch_pixels(), d)
        + linear_flops(n * m, cfg.subpatch_pixels(), c)
        + (t * d + n * m * c) as u64;
    let inner_tokens = n * m;
    let inner = 2 * layer_norm_flops(inner_tokens * c)
        + attention_score_flops(n, m, m, c)
        + attention_rest_flops(n, m, m, c, cfg.inner_heads)
        + mlp_flops(inner_tokens, c, hc)
        + 2 * (inner_tokens * c) as u64;
    let injection = linear_flops(n, m * c, d) + (n * d) as u64;
    let outer = 2 * layer_norm_flops(t * d)
        + attention_score_flops(1, t, t, d)
        + attention_rest_flops(1, t, t, d, cfg.outer_heads)
        + mlp_flops(t, d, hd)
        + 2 * (t * d) as u64;
    let depth = cfg.depth as u64;
    vec![
        ("spatial.embedding".into(), embed),
        ("spatial.inner_encoder".into(), depth * inner),
        ("spatial.injection".into(), depth * injection),
        ("spatial.outer_encoder".into(), depth * outer),
        ("spatial.final_norm".into(), layer_norm_flops(t * d)),
    ]
}

/// Per-module FLOPs of the sequence encoder over `frames` frame features.
pub fn temporal_flops(cfg: &TemporalConfig, frames: usize) -> Vec<(String, u64)> {
    let (nl, big_d, mm) = (cfg.latent_count, cfg.latent_dim, frames);
    let hidden = cfg.mlp_hidden();
    let cross_rest = layer_norm_flops(nl * big_d)
        + layer_norm_flops(mm * big_d)
        + attention_rest_flops(1, nl, mm, big_d, cfg.cross_heads)
        + (nl * big_d) as u64
        + layer_norm_flops(nl * big_d)
        + mlp_flops(nl, big_d, hidden)
        + (nl * big_d) as u64;
    let block = 2 * layer_norm_flops(nl * big_d)
        + attention_score_flops(1, nl, nl, big_d)
        + attention_rest_flops(1, nl, nl, big_d, cfg.self_heads)
        + mlp_flops(nl, big_d, hidden)
        + 2 * (nl * big_d) as u64;
    vec![
        (
            "temporal.input_projection".into(),
            linear_flops(mm, cfg.feature_dim + cfg.position_dim(), big_d),
        ),
        ("temporal.cross_scores".into(), attention_score_flops(1, nl, mm, big_d)),
        ("temporal.cross_attention".into(), cross_rest),
        ("temporal.latent_blocks".into(), cfg.self_blocks as u64 * block),
        (
            "temporal.head".into(),
            (nl * big_d) as u64 + layer_norm_flops(big_d) + linear_flops(1, big_d, cfg.num_classes),
        ),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub frames: usize,
    pub total_params: u64,
    pub param_breakdown: Vec<(String, u64)>,
    /// One frame through the spatial encoder.
    pub frame_flops: u64,
    pub total_flops: u64,
    /// Spatial entries already multiplied by the frame count.
    pub flops_breakdown: Vec<(String, u64)>,
}

impl CostReport {
    pub fn flops(&self, entry: &str) -> Option<u64> {
        self.flops_breakdown.iter().find(|(n, _)| n == entry).map(|(_, v)| *v)
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "parameters: {} ({:.2} M)",
            self.total_params,
            self.total_params as f64 / 1e6
        )?;
        for (name, v) in &self.param_breakdown {
            writeln!(f, "  {name}: {v}")?;
        }
        writeln!(f, "GFLOPs per frame (spatial): {:.4}", self.frame_flops as f64 / 1e9)?;
        writeln!(
            f,
            "GFLOPs per video at {} frames: {:.4}",
            self.frames,
            self.total_flops as f64 / 1e9
        )?;
        for (name, v) in &self.flops_breakdown {
            writeln!(f, "  {name}: {v}")?;
        }
        Ok(())
    }
}

/// Parameters and inference FLOPs for a video of `frames` frames.
pub fn count_flops(spatial: &SpatialConfig, temporal: &TemporalConfig, frames: usize) -> Result<CostReport> {
    let total_params = count_params(spatial, temporal)?;
    let per_frame = spatial_frame_flops(spatial);
    let frame_flops = per_frame.iter().map(|(_, v)| v).sum();
    let flops_breakdown: Vec<(String, u64)> = per_frame
        .into_iter()
        .map(|(n, v)| (n, v * frames as u64))
        .chain(temporal_flops(temporal, frames))
        .collect();
    Ok(CostReport {
        frames,
        total_params,
        param_breakdown: spatial_param_breakdown(spatial)
            .into_iter()
            .chain(temporal_param_breakdown(temporal))
            .collect(),
        frame_flops,
        total_flops: flops_breakdown.iter().map(|(_, v)| v).sum(),
        flops_breakdown,
    })
}
