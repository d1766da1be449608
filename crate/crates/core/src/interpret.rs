//! Patch-level relevance maps by gradient-weighted attention rollout over
//! the outer (patch-token) attention of every block.

use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::model::PainModel;
use crate::nn::Mode;
use crate::tensor::{Rng, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceMap {
    /// One non-negative value per patch, row-major, summing to 1.
    pub values: Vec<f64>,
    pub grid_side: usize,
    pub patch_size: usize,
    pub target_class: usize,
}

impl RelevanceMap {
    /// Patch indices sorted by decreasing relevance (ties by index).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx
    }

    pub fn top(&self, k: usize) -> Vec<usize> {
        self.ranking().into_iter().take(k).collect()
    }

    /// Element-wise mean of maps over the same grid.
    pub fn mean(maps: &[RelevanceMap]) -> Result<RelevanceMap> {
        let first = maps
            .first()
            .ok_or_else(|| Error::Usage("no relevance maps to average".into()))?;
        let mut values = vec![0.0; first.values.len()];
        for m in maps {
            if m.values.len() != values.len() {
                return Err(Error::shape("relevance mean", &[values.len()], &[m.values.len()]));
            }
            for (acc, v) in values.iter_mut().zip(&m.values) {
                *acc += v / maps.len() as f64;
            }
        }
        Ok(RelevanceMap {
            values: normalize(values),
            ..first.clone()
        })
    }
}

/// Scales non-negative values to sum 1; an all-zero vector becomes uniform.
pub fn normalize(mut values: Vec<f64>) -> Vec<f64> {
    let sum: f64 = values.iter().sum();
    let n = values.len() as f64;
    if sum > 0.0 && sum.is_finite() {
        values.iter_mut().for_each(|v| *v /= sum);
    } else {
        values.iter_mut().for_each(|v| *v = 1.0 / n);
    }
    values
}

/// `Ā = mean over heads of max(0, ∇A ⊙ A)` for one frame's `[heads, T, T]`
/// weights and gradients (flat, same layout). Returns `T×T` row-major.
pub fn gradient_weighted(attn: &[f64], grad: &[f64], heads: usize, tokens: usize) -> Vec<f64> {
    let mut out = vec![0.0; tokens * tokens];
    for h in 0..heads {
        let base = h * tokens * tokens;
        for (i, o) in out.iter_mut().enumerate() {
            *o += (attn[base + i] * grad[base + i]).max(0.0) / heads as f64;
        }
    }
    out
}

/// Rolls out per-block `T×T` matrices from input to output:
/// `R ← rownorm(I + Ā_l)·R`, `R₀ = I`. Returns the class-token row over
/// patch tokens `1..T`, normalized.
pub fn rollout(blocks: &[Vec<f64>], tokens: usize) -> Vec<f64> {
    let mut r = vec![0.0; tokens * tokens];
    for i in 0..tokens {
        r[i * tokens + i] = 1.0;
    }
    for a in blocks {
        let mut m = a.clone();
        for i in 0..tokens {
            m[i * tokens + i] += 1.0;
            let row = &mut m[i * tokens..(i + 1) * tokens];
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
        }
        let mut next = vec![0.0; tokens * tokens];
        for i in 0..tokens {
            for k in 0..tokens {
                let mik = m[i * tokens + k];
                if mik != 0.0 {
                    for j in 0..tokens {
                        next[i * tokens + j] += mik * r[k * tokens + j];
                    }
                }
            }
        }
        r = next;
    }
    normalize(r[1..tokens].to_vec())
}

/// One relevance map per frame of `frames` for the video-level logit of
/// `target_class`.
pub fn relevance_maps(model: &PainModel, frames: &[Tensor], target_class: usize) -> Result<Vec<RelevanceMap>> {
    let classes = model.num_classes();
    if target_class >= classes {
        return Err(Error::Param(format!("class {target_class} outside 0..{classes}")));
    }
    if frames.is_empty() {
        return Err(Error::Usage("a video needs at least one frame".into()));
    }
    let cfg = &model.spatial.config;
    let mut rng = Rng::new(0);
    let mut records = Vec::new();
    let features = model
        .spatial
        .encode_recorded(&Tensor::stack(frames)?, Mode::EVAL, &mut rng, Some(&mut records))?;
    let video = crate::temporal::VideoFeature { sequence: features };
    let logits = model.temporal.forward(&video, Mode::EVAL, &mut rng)?;
    let target = logits.narrow(0, target_class, 1)?.sum();
    let refs: Vec<&Tensor> = records.iter().collect();
    let grads = target.grad_wrt(&refs)?;

    let (heads, tokens) = (cfg.outer_heads, cfg.num_patches() + 1);
    let per_frame = heads * tokens * tokens;
    let mut maps = Vec::with_capacity(frames.len());
    for f in 0..frames.len() {
        let span = f * per_frame..(f + 1) * per_frame;
        let blocks: Vec<Vec<f64>> = records
            .iter()
            .map(|a| {
                let zero = vec![0.0; a.len()];
                let g = grads.get(a).unwrap_or(&zero);
                gradient_weighted(&a.data()[span.clone()], &g[span.clone()], heads, tokens)
            })
            .collect();
        maps.push(RelevanceMap {
            values: rollout(&blocks, tokens),
            grid_side: cfg.grid_side(),
            patch_size: cfg.patch_size,
            target_class,
        });
    }
    Ok(maps)
}

/// Min-max scaling to bytes; a constant map becomes all 128.
pub fn quantize_map(values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

fn write_pgm(path: &Path, bytes: &[u8], width: usize, height: usize) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(bytes, width as u32, height as u32, ExtendedColorType::L8)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Reads an 8-bit P5 graymap as `(width, height, bytes)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .into_luma8();
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.into_raw()))
}

/// `<dir>/<stem>_overlay.pgm` next to `path`.
pub fn overlay_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_overlay.pgm"))
}

/// Writes the map at patch-grid resolution to `path` and a frame-resolution
/// variant to [`overlay_path`]. With a frame, the overlay averages the
/// upscaled map with the frame's luminance; otherwise it is the upscaled
/// map alone. Returns both paths.
pub fn export_map_image(map: &RelevanceMap, path: &Path, frame: Option<&Tensor>) -> Result<(PathBuf, PathBuf)> {
    let g = map.grid_side;
    if map.values.len() != g * g {
        return Err(Error::shape("export_map_image", &[map.values.len()], &[g * g]));
    }
    let small = quantize_map(&map.values);
    write_pgm(path, &small, g, g)?;

    let side = g * map.patch_size;
    let mut big = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let v = f64::from(small[(y / map.patch_size) * g + x / map.patch_size]);
            let v = match frame {
                Some(f) if f.shape() == [side, side, 3] => {
                    let px = &f.data()[(y * side + x) * 3..(y * side + x) * 3 + 3];
                    let luma = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
                    0.5 * v + 0.5 * 255.0 * luma.clamp(0.0, 1.0)
                }
                _ => v,
            };
            big.push(v.round() as u8);
        }
    }
    let overlay = overlay_path(path);
    write_pgm(&overlay, &big, side, side)?;
    Ok((path.to_path_buf(), overlay))
}
