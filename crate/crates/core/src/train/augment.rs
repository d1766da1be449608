//! TrivialAugment-style frame augmentation: one randomly chosen op at a
//! random magnitude. Frames are `[H, W, 3]` with values in `[0, 1]`.

use crate::tensor::{Rng, Tensor};

pub const MAX_BRIGHTNESS: f64 = 0.3;
pub const MAX_CONTRAST: f64 = 0.4;
pub const MAX_ROTATION_DEG: f64 = 15.0;
/// Largest shift as a fraction of the frame side.
pub const MAX_TRANSLATION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AugmentOp {
    Identity,
    HorizontalFlip,
    /// Added to every pixel.
    Brightness(f64),
    /// Scale of the deviation from the frame mean.
    Contrast(f64),
    /// Degrees, counter-clockwise about the frame center.
    Rotate(f64),
    /// Pixels `(dx, dy)`.
    Translate(i64, i64),
}

impl AugmentOp {
    /// Uniform op choice, then uniform magnitude within the op's range.
    pub fn sample(rng: &mut Rng, side: usize) -> AugmentOp {
        let signed = |rng: &mut Rng, max: f64| rng.uniform_range(-max, max);
        match rng.below(6) {
            0 => AugmentOp::Identity,
            1 => AugmentOp::HorizontalFlip,
            2 => AugmentOp::Brightness(signed(rng, MAX_BRIGHTNESS)),
            3 => AugmentOp::Contrast(1.0 + signed(rng, MAX_CONTRAST)),
            4 => AugmentOp::Rotate(signed(rng, MAX_ROTATION_DEG)),
            _ => {
                let max = (MAX_TRANSLATION * side as f64).round() as i64;
                let mut shift = || rng.below(2 * max as usize + 1) as i64 - max;
                AugmentOp::Translate(shift(), shift())
            }
        }
    }

    pub fn apply(&self, frame: &Tensor) -> Tensor {
        let &[h, w, ch] = frame.shape() else {
            return frame.clone();
        };
        let src = frame.data();
        let at = |y: usize, x: usize, c: usize| src[(y * w + x) * ch + c];
        let out: Vec<f64> = match *self {
            AugmentOp::Identity => return frame.clone(),
            AugmentOp::HorizontalFlip => remap(h, w, ch, |y, x, c| at(y, w - 1 - x, c)),
            AugmentOp::Brightness(delta) => src.iter().map(|v| v + delta).collect(),
            AugmentOp::Contrast(factor) => {
                let mean = src.iter().sum::<f64>() / src.len().max(1) as f64;
                src.iter().map(|v| mean + factor * (v - mean)).collect()
            }
            AugmentOp::Translate(dx, dy) => remap(h, w, ch, |y, x, c| {
                let sy = (y as i64 - dy).clamp(0, h as i64 - 1) as usize;
                let sx = (x as i64 - dx).clamp(0, w as i64 - 1) as usize;
                at(sy, sx, c)
            }),
            AugmentOp::Rotate(deg) => {
                let (sin, cos) = deg.to_radians().sin_cos();
                let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
                remap(h, w, ch, |y, x, c| {
                    // inverse rotation of the output coordinate, bilinear with edge clamp
                    let (ry, rx) = (y as f64 - cy, x as f64 - cx);
                    let sx = (cos * rx - sin * ry + cx).clamp(0.0, w as f64 - 1.0);
                    let sy = (sin * rx + cos * ry + cy).clamp(0.0, h as f64 - 1.0);
                    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
                    let top = at(y0, x0, c) * (1.0 - fx) + at(y0, x1, c) * fx;
                    let bottom = at(y1, x0, c) * (1.0 - fx) + at(y1, x1, c) * fx;
                    top * (1.0 - fy) + bottom * fy
                })
            }
        };
        let clamped = out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Tensor::new(clamped, frame.shape()).expect("same shape")
    }
}

fn remap(h: usize, w: usize, ch: usize, f: impl Fn(usize, usize, usize) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(h * w * ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                out.push(f(y, x, c));
            }
        }
    }
    out
}

pub fn trivial_augment(frame: &Tensor, rng: &mut Rng) -> Tensor {
    AugmentOp::sample(rng, frame.shape()[0]).apply(frame)
}

/// One draw shared by every frame of a video.
pub fn augment_video(frames: &[Tensor], rng: &mut Rng) -> Vec<Tensor> {
    let Some(first) = frames.first() else {
        return Vec::new();
    };
    let op = AugmentOp::sample(rng, first.shape()[0]);
    frames.iter().map(|f| op.apply(f)).collect()
}
