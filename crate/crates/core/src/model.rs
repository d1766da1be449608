//! Full video classifier: frame encoder followed by the sequence encoder.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::nn::{impl_parameters, Mode};
use crate::spatial::{SpatialConfig, SpatialEncoder};
use crate::temporal::{TemporalConfig, TemporalEncoder, VideoFeature};
use crate::tensor::{no_grad, Rng, Tensor};

/// Frames per spatial pass at inference; bounds peak activation memory.
pub const INFERENCE_CHUNK: usize = 16;

#[derive(Clone, Debug)]
pub struct PainModel {
    pub spatial: SpatialEncoder,
    pub temporal: TemporalEncoder,
}

impl_parameters!(PainModel { spatial, temporal });

impl PainModel {
    /// Randomly initialized model; identical seeds give identical weights.
    pub fn new(spatial: &SpatialConfig, temporal: &TemporalConfig, seed: u64) -> Result<Self> {
        if temporal.feature_dim != spatial.outer_dim {
            return Err(Error::Config(format!(
                "temporal feature dim {} must equal spatial outer dim {}",
                temporal.feature_dim, spatial.outer_dim
            )));
        }
        let rng = Rng::new(seed);
        Ok(PainModel {
            spatial: SpatialEncoder::new(spatial, &mut rng.derive(0))?,
            temporal: TemporalEncoder::new(temporal, &mut rng.derive(1))?,
        })
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Self::new(&cfg.spatial, &cfg.temporal, cfg.train.seed)
    }

    pub fn num_classes(&self) -> usize {
        self.temporal.config.num_classes
    }

    /// Per-frame features of a video, `[M, d]`.
    pub fn frame_features(&self, frames: &[Tensor], mode: Mode, rng: &mut Rng) -> Result<VideoFeature> {
        if frames.is_empty() {
            return Err(Error::Usage("a video needs at least one frame".into()));
        }
        let chunk = if mode.training { frames.len() } else { INFERENCE_CHUNK };
        let mut parts = Vec::with_capacity(frames.len().div_ceil(chunk));
        for group in frames.chunks(chunk) {
            parts.push(self.spatial.encode(&Tensor::stack(group)?, mode, rng)?);
        }
        Ok(VideoFeature {
            sequence: Tensor::concat(&parts, 0)?,
        })
    }

    /// Logits `[num_classes]` for a video given as frames `[H, W, 3]`.
    pub fn forward_video(&self, frames: &[Tensor], mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let features = self.frame_features(frames, mode, rng)?;
        self.temporal.forward(&features, mode, rng)
    }

    /// Evaluation-mode logits without building a gradient graph.
    pub fn logits(&self, frames: &[Tensor]) -> Result<Vec<f64>> {
        no_grad(|| self.forward_video(frames, Mode::EVAL, &mut Rng::new(0))).map(|t| t.data().to_vec())
    }

    pub fn predict(&self, frames: &[Tensor]) -> Result<usize> {
        Ok(argmax(&self.logits(frames)?))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_module, DEFAULT_STEP};
    use crate::nn::Parameters;
    use crate::spatial::Pooling;

    pub(crate) fn toy_configs(classes: usize) -> (SpatialConfig, TemporalConfig) {
        (
            SpatialConfig {
                image_size: 8,
                patch_size: 4,
                subpatch_size: 2,
                outer_dim: 8,
                inner_dim: 2,
                depth: 1,
                outer_heads: 2,
                inner_heads: 1,
                mlp_ratio: 2.0,
                drop_path_p: 0.1,
                pooling: Pooling::ClassToken,
                ..SpatialConfig::default()
            },
            TemporalConfig {
                feature_dim: 8,
                latent_count: 2,
                latent_dim: 8,
                self_heads: 2,
                self_blocks: 1,
                fourier_bands: 1,
                mlp_ratio: 2.0,
                num_classes: classes,
                ..TemporalConfig::default()
            },
        )
    }

    fn frames(k: usize, rng: &mut Rng) -> Vec<Tensor> {
        (0..k)
            .map(|_| Tensor::new((0..8 * 8 * 3).map(|_| rng.uniform()).collect(), &[8, 8, 3]).unwrap())
            .collect()
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
        assert_eq!(argmax(&[-1.0, -0.5, -3.0]), 1);
    }

    #[test]
    fn same_seed_same_weights() {
        let (s, t) = toy_configs(5);
        let a = PainModel::new(&s, &t, 3).unwrap().named_parameters();
        let b = PainModel::new(&s, &t, 3).unwrap().named_parameters();
        for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
        let mismatch = TemporalConfig { feature_dim: 4, ..t };
        assert!(matches!(PainModel::new(&s, &mismatch, 0), Err(Error::Config(_))));
    }

    #[test]
    fn logits_length_and_chunking() {
        let (s, t) = toy_configs(2);
        let model = PainModel::new(&s, &t, 1).unwrap();
        let mut rng = Rng::new(2);
        let video = frames(INFERENCE_CHUNK + 3, &mut rng);
        let logits = model.logits(&video).unwrap();
        assert_eq!(logits.len(), 2);
        // one-shot train-mode pass with no stochastic layers agrees with chunked inference
        let full = model.forward_video(&video, Mode::train(0.0, 0.0), &mut rng).unwrap();
        for (a, b) in logits.iter().zip(full.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(model.predict(&video).unwrap() < 2);
    }

    #[test]
    fn full_toy_model_gradcheck() {
        let (s, t) = toy_configs(3);
        let s = SpatialConfig {
            pixel_mean: [0.5; 3],
            pixel_std: [0.5; 3],
            ..s
        };
        let mut model = PainModel::new(&s, &t, 4).unwrap();
        model.visit_mut("", &mut |_, p| {
            *p = p.with_data(p.data().iter().map(|v| v * 5.0 + 0.01).collect()).unwrap();
        });
        let video = frames(3, &mut Rng::new(5));
        let report = check_module(
            &mut model,
            |m| {
                let logits = m.forward_video(&video, Mode::train(0.2, 0.2), &mut Rng::new(6))?;
                crate::train::cross_entropy_smoothed(&logits, 1, 0.1)
            },
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(report.passes(1e-4), "{report:?}");
    }
}
