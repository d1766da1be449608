//! Transformer-in-transformer frame encoder.
//!
//! A frame is tiled into `n` patches of `p×p` pixels and every patch into
//! `m` sub-patches of `s×s` pixels. Sub-patch tokens (width `c`) run through
//! an inner encoder per patch; their flattened output is projected onto the
//! matching patch token (width `d`), and the patch tokens plus a class token
//! run through the outer encoder. The final normalized class token is the
//! frame feature.

use serde::{Deserialize, Serialize};

use crate::attention::AttentionParams;
use crate::error::{Error, Result};
use crate::nn::{hidden_dim, impl_parameters, trunc_normal, LayerNorm, Linear, Mlp, Mode};
use crate::tensor::{Rng, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Final class-token embedding.
    #[default]
    ClassToken,
    /// Mean of the final patch-token embeddings.
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub subpatch_size: usize,
    pub outer_dim: usize,
    pub inner_dim: usize,
    pub depth: usize,
    pub outer_heads: usize,
    pub inner_heads: usize,
    pub mlp_ratio: f64,
    pub drop_path_p: f64,
    pub pooling: Pooling,
    /// Per-channel statistics used to standardize raw `[0, 1]` pixels.
    pub pixel_mean: [f64; 3],
    pub pixel_std: [f64; 3],
}

impl Default for SpatialConfig {
    fn default() -> Self {
        SpatialConfig {
            image_size: 224,
            patch_size: 16,
            subpatch_size: 4,
            outer_dim: 192,
            inner_dim: 12,
            depth: 12,
            outer_heads: 3,
            inner_heads: 2,
            mlp_ratio: 4.0,
            drop_path_p: 0.1,
            pooling: Pooling::ClassToken,
            pixel_mean: [0.485, 0.456, 0.406],
            pixel_std: [0.229, 0.224, 0.225],
        }
    }
}

impl SpatialConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("spatial: {msg}")));
        let dims = [
            self.image_size,
            self.patch_size,
            self.subpatch_size,
            self.outer_dim,
            self.inner_dim,
            self.depth,
            self.outer_heads,
            self.inner_heads,
        ];
        if dims.contains(&0) {
            return fail("all sizes, dims, depth and head counts must be positive".into());
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return fail(format!(
                "image size {} not divisible by patch size {}",
                self.image_size, self.patch_size
            ));
        }
        if !self.patch_size.is_multiple_of(self.subpatch_size) {
            return fail(format!(
                "patch size {} not divisible by sub-patch size {}",
                self.patch_size, self.subpatch_size
            ));
        }
        if self.subpatches_per_patch() * self.inner_dim != self.outer_dim {
            return fail(format!(
                "m·c = {}·{} must equal outer dim {}",
                self.subpatches_per_patch(),
                self.inner_dim,
                self.outer_dim
            ));
        }
        if !self.outer_dim.is_multiple_of(self.outer_heads) || !self.inner_dim.is_multiple_of(self.inner_heads) {
            return fail("embedding dims must be divisible by their head counts".into());
        }
        if !(self.mlp_ratio > 0.0) {
            return fail(format!("mlp ratio {} must be positive", self.mlp_ratio));
        }
        if self.pixel_std.iter().any(|v| !(*v > 0.0)) || self.pixel_mean.iter().any(|v| !v.is_finite()) {
            return fail("pixel statistics must be finite with positive std".into());
        }
        if !(0.0..1.0).contains(&self.drop_path_p) {
            return fail(format!("drop path probability {} outside [0, 1)", self.drop_path_p));
        }
        Ok(())
    }

    /// `n = (image_size / p)²`.
    pub fn num_patches(&self) -> usize {
        self.grid_side().pow(2)
    }

    pub fn grid_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// `m = (p / s)²`.
    pub fn subpatches_per_patch(&self) -> usize {
        (self.patch_size / self.subpatch_size).pow(2)
    }

    pub fn patch_pixels(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    pub fn subpatch_pixels(&self) -> usize {
        self.subpatch_size * self.subpatch_size * 3
    }

    pub fn outer_hidden(&self) -> usize {
        hidden_dim(self.outer_dim, self.mlp_ratio)
    }

    pub fn inner_hidden(&self) -> usize {
        hidden_dim(self.inner_dim, self.mlp_ratio)
    }
}

/// Patch and sub-patch tiling of one frame.
#[derive(Clone, Debug)]
pub struct PatchGrid {
    /// `[n, p, p, 3]`
    pub patches: Tensor,
    /// `[n, m, s, s, 3]`
    pub subpatches: Tensor,
    pub frame_index: usize,
}

impl PatchGrid {
    pub fn new(frame: &Tensor, config: &SpatialConfig, frame_index: usize) -> Result<Self> {
        let patches = patchify(frame, config.patch_size)?;
        let subpatches = subpatchify(&patches, config.subpatch_size)?;
        Ok(PatchGrid {
            patches,
            subpatches,
            frame_index,
        })
    }
}

/// Row-major non-overlapping `p×p` tiling: `[H, W, 3] → [n, p, p, 3]`.
pub fn patchify(frame: &Tensor, p: usize) -> Result<Tensor> {
    let &[h, w, ch] = frame.shape() else {
        return Err(Error::shape("patchify", frame.shape(), &[p, p, 3]));
    };
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::shape("patchify", frame.shape(), &[p, p, ch]));
    }
    let (gh, gw) = (h / p, w / p);
    frame
        .reshape(&[gh, p, gw, p, ch])?
        .permute(&[0, 2, 1, 3, 4])?
        .reshape(&[gh * gw, p, p, ch])
}

/// Inverse of [`patchify`] for a `grid_h × grid_w` patch grid.
pub fn unpatchify(patches: &Tensor, grid_h: usize, grid_w: usize) -> Result<Tensor> {
    let &[n, p, p2, ch] = patches.shape() else {
        return Err(Error::shape("unpatchify", patches.shape(), &[grid_h, grid_w]));
    };
    if n != grid_h * grid_w || p != p2 {
        return Err(Error::shape("unpatchify", patches.shape(), &[grid_h, grid_w]));
    }
    patches
        .reshape(&[grid_h, grid_w, p, p, ch])?
        .permute(&[0, 2, 1, 3, 4])?
        .reshape(&[grid_h * p, grid_w * p, ch])
}

/// Splits each patch into `(p/s)²` sub-patches: `[n, p, p, 3] → [n, m, s, s, 3]`.
pub fn subpatchify(patches: &Tensor, s: usize) -> Result<Tensor> {
    let &[n, p, p2, ch] = patches.shape() else {
        return Err(Error::shape("subpatchify", patches.shape(), &[s, s]));
    };
    if s == 0 || p != p2 || p % s != 0 {
        return Err(Error::shape("subpatchify", patches.shape(), &[s, s]));
    }
    let g = p / s;
    patches
        .reshape(&[n, g, s, g, s, ch])?
        .permute(&[0, 1, 3, 2, 4, 5])?
        .reshape(&[n, g * g, s, s, ch])
}

/// Inverse of [`subpatchify`].
pub fn unsubpatchify(subpatches: &Tensor) -> Result<Tensor> {
    let &[n, m, s, s2, ch] = subpatches.shape() else {
        return Err(Error::shape("unsubpatchify", subpatches.shape(), &[]));
    };
    let g = (m as f64).sqrt().round() as usize;
    if g * g != m || s != s2 {
        return Err(Error::shape("unsubpatchify", subpatches.shape(), &[]));
    }
    subpatches
        .reshape(&[n, g, g, s, s, ch])?
        .permute(&[0, 1, 3, 2, 4, 5])?
        .reshape(&[n, g * s, g * s, ch])
}

/// One paired inner/outer block.
#[derive(Clone, Debug)]
pub struct TntBlock {
    pub inner_norm1: LayerNorm,
    pub inner_attn: AttentionParams,
    pub inner_norm2: LayerNorm,
    pub inner_mlp: Mlp,
    /// Flattened sub-patch tokens of a patch (`m·c`) onto the patch token (`d`).
    pub inner_proj: Linear,
    pub outer_norm1: LayerNorm,
    pub outer_attn: AttentionParams,
    pub outer_norm2: LayerNorm,
    pub outer_mlp: Mlp,
}

impl_parameters!(TntBlock {
    inner_norm1,
    inner_attn,
    inner_norm2,
    inner_mlp,
    inner_proj,
    outer_norm1,
    outer_attn,
    outer_norm2,
    outer_mlp,
});

impl TntBlock {
    pub fn new(cfg: &SpatialConfig, rng: &mut Rng) -> Result<Self> {
        let (c, d) = (cfg.inner_dim, cfg.outer_dim);
        Ok(TntBlock {
            inner_norm1: LayerNorm::new(c),
            inner_attn: AttentionParams::new_self(c, cfg.inner_heads, rng)?,
            inner_norm2: LayerNorm::new(c),
            inner_mlp: Mlp::new(c, cfg.inner_hidden(), rng),
            inner_proj: Linear::new(cfg.subpatches_per_patch() * c, d, rng),
            outer_norm1: LayerNorm::new(d),
            outer_attn: AttentionParams::new_self(d, cfg.outer_heads, rng)?,
            outer_norm2: LayerNorm::new(d),
            outer_mlp: Mlp::new(d, cfg.outer_hidden(), rng),
        })
    }

    /// `z: [n+1, d]`, `y: [n, m, c]` → updated `(z, y)`. Also accepts a
    /// stack of frames, `z: [k, n+1, d]` with `y: [k·n, m, c]`. Outer
    /// attention weights `[k·heads, n+1, n+1]` are pushed onto `record`.
    pub fn forward(
        &self,
        z: &Tensor,
        y: &Tensor,
        mode: Mode,
        rng: &mut Rng,
        record: Option<&mut Vec<Tensor>>,
    ) -> Result<(Tensor, Tensor)> {
        let single = z.rank() == 2;
        let z = if single {
            z.reshape(&[1, z.shape()[0], z.shape()[1]])?
        } else {
            z.clone()
        };
        let (&[k, tokens, d], &[kn, m, c]) = (z.shape(), y.shape()) else {
            return Err(Error::shape("tnt_block", z.shape(), y.shape()));
        };
        if kn != k * (tokens - 1) || m * c != self.inner_proj.input_dim() {
            return Err(Error::shape("tnt_block", z.shape(), y.shape()));
        }

        // inner encoder, batched over patches
        let h = self.inner_norm1.forward(y)?;
        let y = y.add(&self.inner_attn.forward(&h, &h, 0.0, false, rng, None)?)?;
        let y = y.add(&self.inner_mlp.forward(&self.inner_norm2.forward(&y)?)?)?;

        // inject inner output into the patch tokens; class token untouched
        let injected = self.inner_proj.forward(&y.reshape(&[k, tokens - 1, m * c])?)?;
        let injected = Tensor::concat(&[Tensor::zeros(&[k, 1, d]), injected], 1)?;
        let z = z.add(&injected)?;

        // outer encoder with stochastic depth per frame on both residual branches
        let h = self.outer_norm1.forward(&z)?;
        let attn = self.outer_attn.forward(&h, &h, 0.0, false, rng, record)?;
        let z = z.add(&attn.drop_path(mode.drop_path_p, mode.training, rng)?)?;
        let mlp = self.outer_mlp.forward(&self.outer_norm2.forward(&z)?)?;
        let z = z.add(&mlp.drop_path(mode.drop_path_p, mode.training, rng)?)?;
        let z = if single { z.reshape(&[tokens, d])? } else { z };
        Ok((z, y))
    }
}

/// Trainable state of the frame encoder.
#[derive(Clone, Debug)]
pub struct SpatialEncoder {
    pub config: SpatialConfig,
    /// `[1, d]`
    pub cls_token: Tensor,
    /// `[n+1, d]`, slot 0 belongs to the class token.
    pub pos_patch: Tensor,
    /// `[m, c]`, shared by every patch.
    pub pos_subpatch: Tensor,
    pub patch_embed: Linear,
    pub subpatch_embed: Linear,
    pub blocks: Vec<TntBlock>,
    pub final_norm: LayerNorm,
}

impl_parameters!(SpatialEncoder {
    cls_token,
    pos_patch,
    pos_subpatch,
    patch_embed,
    subpatch_embed,
    blocks,
    final_norm,
});

impl SpatialEncoder {
    pub fn new(config: &SpatialConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (n, m, c, d) = (
            config.num_patches(),
            config.subpatches_per_patch(),
            config.inner_dim,
            config.outer_dim,
        );
        Ok(SpatialEncoder {
            config: config.clone(),
            cls_token: trunc_normal(&[1, d], rng),
            pos_patch: trunc_normal(&[n + 1, d], rng),
            pos_subpatch: trunc_normal(&[m, c], rng),
            patch_embed: Linear::new(config.patch_pixels(), d, rng),
            subpatch_embed: Linear::new(config.subpatch_pixels(), c, rng),
            blocks: (0..config.depth)
                .map(|_| TntBlock::new(config, rng))
                .collect::<Result<_>>()?,
            final_norm: LayerNorm::new(d),
        })
    }

    /// Linear projections plus learned position tables: `Z₀: [n+1, d]`
    /// (class token first) and `Y₀: [n, m, c]`.
    pub fn embed(&self, grid: &PatchGrid) -> Result<(Tensor, Tensor)> {
        let cfg = &self.config;
        let (n, m) = (cfg.num_patches(), cfg.subpatches_per_patch());
        let (z, y) = self.embed_tiles(
            &grid.patches.reshape(&[1, n, cfg.patch_pixels()])?,
            &grid.subpatches.reshape(&[n, m, cfg.subpatch_pixels()])?,
        )?;
        Ok((z.reshape(&[n + 1, cfg.outer_dim])?, y))
    }

    /// `patches: [k, n, p·p·3]`, `subpatches: [k·n, m, s·s·3]` →
    /// `(Z₀: [k, n+1, d], Y₀: [k·n, m, c])`.
    fn embed_tiles(&self, patches: &Tensor, subpatches: &Tensor) -> Result<(Tensor, Tensor)> {
        let k = patches.shape()[0];
        let d = self.config.outer_dim;
        let cls = Tensor::zeros(&[k, 1, d]).add(&self.cls_token)?;
        let patches = self.standardize(patches)?;
        let z = Tensor::concat(&[cls, self.patch_embed.forward(&patches)?], 1)?.add(&self.pos_patch)?;
        let y = self
            .subpatch_embed
            .forward(&self.standardize(subpatches)?)?
            .add(&self.pos_subpatch)?;
        Ok((z, y))
    }

    /// `(x − mean) / std` per channel on flattened RGB pixel runs.
    fn standardize(&self, pixels: &Tensor) -> Result<Tensor> {
        let shape = pixels.shape();
        let (mean, std) = (self.config.pixel_mean, self.config.pixel_std);
        let scale: Vec<f64> = (0..pixels.len()).map(|i| 1.0 / std[i % 3]).collect();
        let shift: Vec<f64> = (0..pixels.len()).map(|i| -mean[i % 3] / std[i % 3]).collect();
        if pixels.requires_grad() {
            return pixels
                .mul(&Tensor::new(scale, shape)?)?
                .add(&Tensor::new(shift, shape)?);
        }
        let data = pixels
            .data()
            .iter()
            .zip(scale.iter().zip(&shift))
            .map(|(x, (a, b))| x * a + b)
            .collect();
        Tensor::new(data, shape)
    }

    /// Tiles a stack of frames `[k, H, W, 3]` into flattened patches
    /// `[k, n, p·p·3]` and sub-patches `[k·n, m, s·s·3]`.
    fn tile_frames(&self, frames: &Tensor) -> Result<(Tensor, Tensor)> {
        let cfg = &self.config;
        let size = cfg.image_size;
        let &[k, h, w, 3] = frames.shape() else {
            return Err(Error::shape("spatial_forward", frames.shape(), &[size, size, 3]));
        };
        if h != size || w != size {
            return Err(Error::shape("spatial_forward", &frames.shape()[1..], &[size, size, 3]));
        }
        let (g, p, s) = (cfg.grid_side(), cfg.patch_size, cfg.subpatch_size);
        let (n, gs) = (cfg.num_patches(), p / s);
        let patches = frames.reshape(&[k, g, p, g, p, 3])?.permute(&[0, 1, 3, 2, 4, 5])?;
        let subpatches = patches
            .reshape(&[k * n, gs, s, gs, s, 3])?
            .permute(&[0, 1, 3, 2, 4, 5])?
            .reshape(&[k * n, gs * gs, cfg.subpatch_pixels()])?;
        Ok((patches.reshape(&[k, n, cfg.patch_pixels()])?, subpatches))
    }

    /// Frame `[H, W, 3]` → feature `[d]`.
    pub fn forward(&self, frame: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        self.forward_recorded(frame, mode, rng, None)
    }

    /// [`SpatialEncoder::forward`] that also collects every block's outer
    /// attention weights `[heads, n+1, n+1]`.
    pub fn forward_recorded(
        &self,
        frame: &Tensor,
        mode: Mode,
        rng: &mut Rng,
        record: Option<&mut Vec<Tensor>>,
    ) -> Result<Tensor> {
        let size = self.config.image_size;
        if frame.shape() != [size, size, 3] {
            return Err(Error::shape("spatial_forward", frame.shape(), &[size, size, 3]));
        }
        let out = self.encode_recorded(&frame.reshape(&[1, size, size, 3])?, mode, rng, record)?;
        out.reshape(&[self.config.outer_dim])
    }

    /// Stack of frames `[k, H, W, 3]` → features `[k, d]`, sharing one pass
    /// through every block. Stochastic depth is drawn per frame.
    pub fn encode(&self, frames: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        self.encode_recorded(frames, mode, rng, None)
    }

    pub(crate) fn encode_recorded(
        &self,
        frames: &Tensor,
        mode: Mode,
        rng: &mut Rng,
        mut record: Option<&mut Vec<Tensor>>,
    ) -> Result<Tensor> {
        let (patches, subpatches) = self.tile_frames(frames)?;
        let (mut z, mut y) = self.embed_tiles(&patches, &subpatches)?;
        for block in &self.blocks {
            (z, y) = block.forward(&z, &y, mode, rng, record.as_deref_mut())?;
        }
        let z = self.final_norm.forward(&z)?;
        let (k, n, d) = (frames.shape()[0], self.config.num_patches(), self.config.outer_dim);
        match self.config.pooling {
            Pooling::ClassToken => z.narrow(1, 0, 1)?.reshape(&[k, d]),
            Pooling::Mean => z.narrow(1, 1, n)?.mean_axis(1),
        }
    }
}
