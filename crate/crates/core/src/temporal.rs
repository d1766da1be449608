//! Latent-bottleneck encoder over the sequence of frame features.
//!
//! Frame features (plus Fourier position features) are read by a small
//! learned latent array through one cross-attention block, refined by
//! self-attention blocks over the latents, then mean-pooled into logits.

use serde::{Deserialize, Serialize};

use crate::attention::{check_bottleneck, AttentionParams, LatentArray};
use crate::error::{Error, Result};
use crate::nn::{hidden_dim, impl_parameters, LayerNorm, Linear, Mlp, Mode};
use crate::tensor::{Rng, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalConfig {
    pub feature_dim: usize,
    pub latent_count: usize,
    pub latent_dim: usize,
    pub self_heads: usize,
    pub cross_heads: usize,
    pub self_blocks: usize,
    pub fourier_bands: usize,
    pub mlp_ratio: f64,
    pub attn_dropout_p: f64,
    pub num_classes: usize,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            feature_dim: 192,
            latent_count: 32,
            latent_dim: 192,
            self_heads: 8,
            cross_heads: 1,
            self_blocks: 2,
            fourier_bands: 6,
            mlp_ratio: 4.0,
            attn_dropout_p: 0.1,
            num_classes: 5,
        }
    }
}

impl TemporalConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("temporal: {msg}")));
        let dims = [
            self.feature_dim,
            self.latent_count,
            self.latent_dim,
            self.self_heads,
            self.cross_heads,
            self.fourier_bands,
        ];
        if dims.contains(&0) {
            return fail("dims, latent count, head counts and band count must be positive".into());
        }
        if self.num_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !self.latent_dim.is_multiple_of(self.self_heads) || !self.latent_dim.is_multiple_of(self.cross_heads) {
            return fail(format!("latent dim {} not divisible by head counts", self.latent_dim));
        }
        if !(self.mlp_ratio > 0.0) {
            return fail(format!("mlp ratio {} must be positive", self.mlp_ratio));
        }
        if !(0.0..1.0).contains(&self.attn_dropout_p) {
            return fail(format!("attention dropout {} outside [0, 1)", self.attn_dropout_p));
        }
        Ok(())
    }

    /// Width of the Fourier position features: `2·bands + 1`.
    pub fn position_dim(&self) -> usize {
        2 * self.fourier_bands + 1
    }

    pub fn mlp_hidden(&self) -> usize {
        hidden_dim(self.latent_dim, self.mlp_ratio)
    }
}

/// Ordered per-frame embeddings of one video, `[M, d]`.
#[derive(Clone, Debug)]
pub struct VideoFeature {
    pub sequence: Tensor,
}

impl VideoFeature {
    pub fn frame_count(&self) -> usize {
        self.sequence.shape()[0]
    }

    pub fn feature_dim(&self) -> usize {
        self.sequence.shape()[1]
    }

    /// Size of the video feature when flattened, `M·d`.
    pub fn flattened_len(&self) -> usize {
        self.sequence.len()
    }
}

/// Stacks frame features `[d]` in order into a `[M, d]` sequence.
pub fn concat_frame_features(features: &[Tensor]) -> Result<VideoFeature> {
    if features.is_empty() {
        return Err(Error::Usage("a video needs at least one frame feature".into()));
    }
    let d = features[0].shape();
    for f in features {
        if f.rank() != 1 || f.shape() != d {
            return Err(Error::shape("concat_frame_features", d, f.shape()));
        }
    }
    Ok(VideoFeature {
        sequence: Tensor::stack(features)?,
    })
}

/// Fourier position features `[M, 2·bands+1]`: columns are
/// `x, sin(π f_1 x) … sin(π f_B x), cos(π f_1 x) … cos(π f_B x)` for
/// `x_j = −1 + 2j/(M−1)` and `f_b` evenly spaced from 1 to `M/2`.
pub fn fourier_position_encoding(frames: usize, bands: usize) -> Result<Tensor> {
    if frames == 0 || bands == 0 {
        return Err(Error::Usage(format!(
            "position encoding needs frames ≥ 1 and bands ≥ 1 (got {frames}, {bands})"
        )));
    }
    let top = frames as f64 / 2.0;
    let freqs: Vec<f64> = (0..bands)
        .map(|b| {
            if bands == 1 {
                1.0
            } else {
                1.0 + (top - 1.0) * b as f64 / (bands - 1) as f64
            }
        })
        .collect();
    let width = 2 * bands + 1;
    let mut data = Vec::with_capacity(frames * width);
    for j in 0..frames {
        let x = if frames == 1 {
            0.0
        } else {
            -1.0 + 2.0 * j as f64 / (frames - 1) as f64
        };
        data.push(x);
        data.extend(freqs.iter().map(|f| (std::f64::consts::PI * f * x).sin()));
        data.extend(freqs.iter().map(|f| (std::f64::consts::PI * f * x).cos()));
    }
    Tensor::new(data, &[frames, width])
}

/// Self-attention over the latents followed by a residual MLP.
#[derive(Clone, Debug)]
pub struct LatentBlock {
    pub norm1: LayerNorm,
    pub attn: AttentionParams,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
}

impl_parameters!(LatentBlock {
    norm1,
    attn,
    norm2,
    mlp
});

impl LatentBlock {
    fn new(cfg: &TemporalConfig, rng: &mut Rng) -> Result<Self> {
        Ok(LatentBlock {
            norm1: LayerNorm::new(cfg.latent_dim),
            attn: AttentionParams::new_self(cfg.latent_dim, cfg.self_heads, rng)?,
            norm2: LayerNorm::new(cfg.latent_dim),
            mlp: Mlp::new(cfg.latent_dim, cfg.mlp_hidden(), rng),
        })
    }

    fn forward(&self, z: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let h = self.norm1.forward(z)?;
        let z = z.add(
            &self
                .attn
                .forward(&h, &h, mode.attn_dropout_p, mode.training, rng, None)?,
        )?;
        z.add(&self.mlp.forward(&self.norm2.forward(&z)?)?)
    }
}

#[derive(Clone, Debug)]
pub struct TemporalEncoder {
    pub config: TemporalConfig,
    /// `[d + 2·bands + 1] → D`; rows past `d` read the position features.
    pub input_proj: Linear,
    pub latents: LatentArray,
    pub cross_latent_norm: LayerNorm,
    pub cross_input_norm: LayerNorm,
    pub cross_attn: AttentionParams,
    pub cross_mlp_norm: LayerNorm,
    pub cross_mlp: Mlp,
    pub blocks: Vec<LatentBlock>,
    pub head_norm: LayerNorm,
    pub head: Linear,
}

impl_parameters!(TemporalEncoder {
    input_proj,
    latents,
    cross_latent_norm,
    cross_input_norm,
    cross_attn,
    cross_mlp_norm,
    cross_mlp,
    blocks,
    head_norm,
    head,
});

impl TemporalEncoder {
    pub fn new(config: &TemporalConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let big_d = config.latent_dim;
        Ok(TemporalEncoder {
            config: config.clone(),
            input_proj: Linear::new(config.feature_dim + config.position_dim(), big_d, rng),
            latents: LatentArray::new(config.latent_count, big_d, rng),
            cross_latent_norm: LayerNorm::new(big_d),
            cross_input_norm: LayerNorm::new(big_d),
            cross_attn: AttentionParams::new_cross(big_d, big_d, config.cross_heads, rng)?,
            cross_mlp_norm: LayerNorm::new(big_d),
            cross_mlp: Mlp::new(big_d, config.mlp_hidden(), rng),
            blocks: (0..config.self_blocks)
                .map(|_| LatentBlock::new(config, rng))
                .collect::<Result<_>>()?,
            head_norm: LayerNorm::new(big_d),
            head: Linear::new(big_d, config.num_classes, rng),
        })
    }

    /// `[M, d]` frame features → logits `[num_classes]`.
    pub fn forward(&self, video: &VideoFeature, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let cfg = &self.config;
        let m = video.frame_count();
        if video.feature_dim() != cfg.feature_dim {
            return Err(Error::shape(
                "temporal_forward",
                video.sequence.shape(),
                &[m, cfg.feature_dim],
            ));
        }
        check_bottleneck(cfg.latent_count, m)?;

        let pos = fourier_position_encoding(m, cfg.fourier_bands)?;
        let tokens = self
            .input_proj
            .forward(&Tensor::concat(&[video.sequence.clone(), pos], 1)?)?;

        let z = self.latents.values.clone();
        let q = self.cross_latent_norm.forward(&z)?;
        let kv = self.cross_input_norm.forward(&tokens)?;
        let z = z.add(&self.cross_attn.forward(&q, &kv, 0.0, false, rng, None)?)?;
        let mut z = z.add(&self.cross_mlp.forward(&self.cross_mlp_norm.forward(&z)?)?)?;

        for block in &self.blocks {
            z = block.forward(&z, mode, rng)?;
        }
        let pooled = self.head_norm.forward(&z.mean_axis(0)?)?;
        self.head.forward(&pooled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_module, DEFAULT_STEP};
    use crate::nn::Parameters;

    fn toy(classes: usize) -> TemporalConfig {
        TemporalConfig {
            feature_dim: 8,
            latent_count: 3,
            latent_dim: 8,
            self_heads: 2,
            cross_heads: 1,
            self_blocks: 2,
            fourier_bands: 2,
            mlp_ratio: 2.0,
            attn_dropout_p: 0.1,
            num_classes: classes,
        }
    }

    fn sequence(m: usize, d: usize, rng: &mut Rng) -> VideoFeature {
        VideoFeature {
            sequence: Tensor::new((0..m * d).map(|_| rng.normal()).collect(), &[m, d]).unwrap(),
        }
    }

    /// Scales init weights up so the toy encoder is far from linear.
    fn inflate(enc: &mut TemporalEncoder, factor: f64) {
        enc.visit_mut("", &mut |_, t| {
            *t = t
                .with_data(t.data().iter().map(|v| v * factor + 0.01).collect())
                .unwrap();
        });
    }

    #[test]
    fn flattened_sizes_of_stride_sampled_videos() {
        for (m, size) in [(138, 26496), (69, 13248), (46, 8832), (35, 6720)] {
            let feats = vec![Tensor::zeros(&[192]); m];
            assert_eq!(concat_frame_features(&feats).unwrap().flattened_len(), size);
        }
    }

    #[test]
    fn single_frame_and_ragged_inputs() {
        let f = Tensor::from_slice(&[1.0, 2.0, 3.0], &[3]).unwrap();
        let vf = concat_frame_features(std::slice::from_ref(&f)).unwrap();
        assert_eq!(vf.sequence.data(), f.data());
        assert_eq!(vf.frame_count(), 1);
        assert!(concat_frame_features(&[f, Tensor::zeros(&[4])]).is_err());
        assert!(concat_frame_features(&[]).is_err());
    }

    #[test]
    fn fourier_encoding_examples() {
        let two = fourier_position_encoding(2, 3).unwrap();
        assert_eq!(two.shape(), &[2, 7]);
        assert_eq!(two.data()[0], -1.0);
        assert_eq!(two.data()[7], 1.0);

        let three = fourier_position_encoding(3, 1).unwrap();
        assert_eq!(&three.data()[3..6], &[0.0, 0.0, 1.0]);

        let one = fourier_position_encoding(1, 4).unwrap();
        assert_eq!(one.data()[0], 0.0);
        assert!(fourier_position_encoding(0, 1).is_err());
    }

    #[test]
    fn fourier_encoding_matches_direct_formula() {
        let (m, bands) = (10, 4);
        let enc = fourier_position_encoding(m, bands).unwrap();
        for j in 0..m {
            let x = -1.0 + 2.0 * j as f64 / 9.0;
            for b in 0..bands {
                // frequencies 1, 2.333, 3.667, 5
                let f = 1.0 + 4.0 * b as f64 / 3.0;
                let row = &enc.data()[j * 9..(j + 1) * 9];
                assert!((row[1 + b] - (std::f64::consts::PI * f * x).sin()).abs() < 1e-12);
                assert!((row[1 + bands + b] - (std::f64::consts::PI * f * x).cos()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_length_is_class_count() {
        let mut rng = Rng::new(1);
        for classes in [2, 5] {
            let enc = TemporalEncoder::new(&toy(classes), &mut rng).unwrap();
            let logits = enc.forward(&sequence(6, 8, &mut rng), Mode::EVAL, &mut rng).unwrap();
            assert_eq!(logits.shape(), &[classes]);
            assert!(logits.is_finite());
        }
    }

    #[test]
    fn bottleneck_and_shape_errors() {
        let mut rng = Rng::new(2);
        let enc = TemporalEncoder::new(&toy(5), &mut rng).unwrap();
        let err = enc
            .forward(&sequence(3, 8, &mut rng), Mode::EVAL, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("latent bottleneck not smaller than input")));
        assert!(enc.forward(&sequence(6, 7, &mut rng), Mode::EVAL, &mut rng).is_err());
        assert!(TemporalConfig {
            latent_dim: 10,
            ..TemporalConfig::default()
        }
        .validate()
        .is_err());
    }

    fn reversed(vf: &VideoFeature) -> VideoFeature {
        let m = vf.frame_count();
        let idx: Vec<usize> = (0..m).rev().collect();
        VideoFeature {
            sequence: vf.sequence.index_select(&idx).unwrap(),
        }
    }

    #[test]
    fn frame_order_matters_through_positions_only() {
        let mut rng = Rng::new(3);
        let mut enc = TemporalEncoder::new(&toy(5), &mut rng).unwrap();
        inflate(&mut enc, 20.0);
        let vf = sequence(6, 8, &mut rng);
        let a = enc.forward(&vf, Mode::EVAL, &mut rng).unwrap();
        let b = enc.forward(&reversed(&vf), Mode::EVAL, &mut rng).unwrap();
        let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-6, "{diff}");

        // zero the weight rows that read position features
        let w = &enc.input_proj.weight;
        let mut data = w.data().to_vec();
        data[8 * 8..].fill(0.0);
        enc.input_proj.weight = w.with_data(data).unwrap();
        let a = enc.forward(&vf, Mode::EVAL, &mut rng).unwrap();
        let b = enc.forward(&reversed(&vf), Mode::EVAL, &mut rng).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn train_mode_is_seed_reproducible() {
        let mut rng = Rng::new(4);
        let enc = TemporalEncoder::new(&toy(5), &mut rng).unwrap();
        let vf = sequence(6, 8, &mut rng);
        let mode = Mode::train(0.0, 0.5);
        let a = enc.forward(&vf, mode, &mut Rng::new(8)).unwrap();
        let b = enc.forward(&vf, mode, &mut Rng::new(8)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn toy_encoder_gradcheck() {
        let mut rng = Rng::new(5);
        let mut enc = TemporalEncoder::new(&toy(3), &mut rng).unwrap();
        inflate(&mut enc, 10.0);
        let vf = sequence(6, 8, &mut rng);
        let report = check_module(
            &mut enc,
            |e| {
                Ok(e.forward(&vf, Mode::train(0.0, 0.3), &mut Rng::new(2))?
                    .log_softmax(0)?
                    .narrow(0, 1, 1)?
                    .sum())
            },
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(report.passes(1e-4), "{report:?}");
    }
}
