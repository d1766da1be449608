//! Synthetic stand-in for pain videos.
//!
//! Each frame is a noisy face-like ellipse on a darker background. A Gaussian
//! blob drifts inside the face region and its peak amplitude ramps up over
//! the video, reaching `amplitude·label/4` plus a small per-subject offset at
//! the last frame. The blob center is recorded per frame as ground truth for
//! relevance maps.

use super::{DatasetManifest, VideoSample, NUM_LEVELS};
use crate::tensor::{Rng, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub subjects: usize,
    pub per_class: usize,
    pub frames: usize,
    pub size: usize,
    /// Peak blob amplitude of the highest level.
    pub amplitude: f64,
    /// Standard deviation of per-pixel noise.
    pub noise: f64,
    /// Upper bound of the per-subject amplitude offset.
    pub subject_offset: f64,
    /// Blob radius (standard deviation) as a fraction of the frame side.
    pub blob_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            subjects: 6,
            per_class: 10,
            frames: 16,
            size: 32,
            amplitude: 0.6,
            noise: 0.04,
            subject_offset: 0.03,
            blob_sigma: 0.1,
        }
    }
}

/// Ground truth of one generated video.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTruth {
    /// Blob center `(row, col)` in pixels, per frame.
    pub centers: Vec<(f64, f64)>,
    /// Blob peak amplitude per frame.
    pub amplitudes: Vec<f64>,
}

impl SyntheticTruth {
    pub(crate) fn subsample(&self, stride: usize) -> SyntheticTruth {
        SyntheticTruth {
            centers: self.centers.iter().step_by(stride).copied().collect(),
            amplitudes: self.amplitudes.iter().step_by(stride).copied().collect(),
        }
    }

    /// Frames whose amplitude is within 10% of the video's peak.
    pub fn peak_frames(&self) -> Vec<usize> {
        let max = self.amplitudes.iter().copied().fold(0.0, f64::max);
        (0..self.amplitudes.len())
            .filter(|&i| self.amplitudes[i] >= 0.9 * max)
            .collect()
    }

    /// Row-major index of the `patch × patch` tile holding the blob center.
    pub fn hotspot_patch(&self, frame: usize, patch: usize, grid_side: usize) -> usize {
        let (r, c) = self.centers[frame];
        let cell = |v: f64| ((v / patch as f64).floor().max(0.0) as usize).min(grid_side - 1);
        cell(r) * grid_side + cell(c)
    }
}

/// Generates `subjects × 5 × per_class` videos. Every video depends only on
/// `(seed, subject, label, index)`.
pub fn generate_synthetic(cfg: &SynthConfig) -> DatasetManifest {
    let root = Rng::new(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.subjects * NUM_LEVELS * cfg.per_class);
    for subject in 0..cfg.subjects {
        let mut srng = root.derive(subject as u64);
        let offset = cfg.subject_offset * srng.uniform();
        let tone = srng.uniform_range(-0.05, 0.05);
        for label in 0..NUM_LEVELS {
            for index in 0..cfg.per_class {
                let mut rng = srng.derive((label * 1_000_003 + index + 1) as u64);
                let peak = cfg.amplitude * label as f64 / 4.0 + offset;
                samples.push(video(cfg, &mut rng, peak, tone, label, subject));
            }
        }
    }
    DatasetManifest::from_samples(samples)
}

fn video(cfg: &SynthConfig, rng: &mut Rng, peak: f64, tone: f64, label: usize, subject_id: usize) -> VideoSample {
    let (k, size) = (cfg.frames, cfg.size as f64);
    let sigma = (cfg.blob_sigma * size).max(0.5);
    // start inside the central face region, drift by at most a quarter side
    let (mut cy, mut cx) = (
        size / 2.0 + rng.uniform_range(-size / 5.0, size / 5.0),
        size / 2.0 + rng.uniform_range(-size / 5.0, size / 5.0),
    );
    let heading = rng.uniform_range(0.0, std::f64::consts::TAU);
    let speed = size / (4.0 * k.max(1) as f64);
    let (vy, vx) = (speed * heading.sin(), speed * heading.cos());
    let lo = sigma.min(size / 2.0);
    let hi = (size - sigma).max(size / 2.0);

    let mut frames = Vec::with_capacity(k);
    let mut truth = SyntheticTruth {
        centers: Vec::with_capacity(k),
        amplitudes: Vec::with_capacity(k),
    };
    for t in 0..k {
        let ramp = if k == 1 {
            1.0
        } else {
            0.25 + 0.75 * t as f64 / (k - 1) as f64
        };
        let amp = peak * ramp;
        frames.push(frame(cfg, rng, (cy, cx), sigma, amp, tone));
        truth.centers.push((cy, cx));
        truth.amplitudes.push(amp);
        cy = (cy + vy).clamp(lo, hi);
        cx = (cx + vx).clamp(lo, hi);
    }
    VideoSample {
        frames,
        label,
        subject_id,
        truth: Some(truth),
    }
}

fn frame(cfg: &SynthConfig, rng: &mut Rng, (cy, cx): (f64, f64), sigma: f64, amp: f64, tone: f64) -> Tensor {
    const BLOB_COLOR: [f64; 3] = [1.0, 0.5, 0.5];
    let size = cfg.size;
    let half = size as f64 / 2.0;
    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            let face =
                ((py - half) / (0.45 * size as f64)).powi(2) + ((px - half) / (0.35 * size as f64)).powi(2) <= 1.0;
            let base = if face { 0.45 + tone } else { 0.2 };
            let blob = amp * (-((py - cy).powi(2) + (px - cx).powi(2)) / (2.0 * sigma * sigma)).exp();
            for color in BLOB_COLOR {
                let v = base + color * blob + cfg.noise * rng.normal();
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Tensor::new(data, &[size, size, 3]).expect("shape and data agree")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(subjects: usize, per_class: usize) -> SynthConfig {
        SynthConfig {
            subjects,
            per_class,
            frames: 2,
            size: 8,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn sample_counts() {
        let m = generate_synthetic(&tiny(2, 1));
        assert_eq!(m.len(), 10);
        for label in 0..5 {
            assert_eq!(m.samples.iter().filter(|s| s.label == label).count(), 2);
        }
        let big = generate_synthetic(&SynthConfig {
            frames: 1,
            size: 2,
            ..tiny(87, 20)
        });
        assert_eq!(big.len(), 8700);
        assert_eq!((big.subjects, big.per_class_per_subject), (87, 20));
    }

    #[test]
    fn same_seed_same_frames() {
        let a = generate_synthetic(&tiny(2, 2));
        let b = generate_synthetic(&tiny(2, 2));
        assert_eq!(a.samples[0].frames[0].data(), b.samples[0].frames[0].data());
        let c = generate_synthetic(&SynthConfig { seed: 1, ..tiny(2, 2) });
        assert_ne!(a.samples[0].frames[0].data(), c.samples[0].frames[0].data());
        // more subjects do not change the existing ones
        let d = generate_synthetic(&tiny(3, 2));
        assert_eq!(a.samples[9].frames[1].data(), d.samples[9].frames[1].data());
    }

    #[test]
    fn pixels_in_unit_range_and_truth_recorded() {
        let m = generate_synthetic(&SynthConfig {
            frames: 5,
            ..tiny(1, 1)
        });
        for s in &m.samples {
            assert_eq!(s.frame_count(), 5);
            assert!(s
                .frames
                .iter()
                .all(|f| f.shape() == [8, 8, 3] && f.data().iter().all(|v| (0.0..=1.0).contains(v))));
            let truth = s.truth.as_ref().unwrap();
            assert_eq!(truth.centers.len(), 5);
            assert!(truth.amplitudes.windows(2).all(|w| w[1] >= w[0]));
            assert_eq!(*truth.peak_frames().last().unwrap(), 4);
        }
    }

    #[test]
    fn blob_intensity_increases_with_label() {
        let cfg = SynthConfig {
            frames: 3,
            size: 16,
            ..tiny(4, 25)
        };
        let m = generate_synthetic(&cfg);
        // mean red-channel value in a 3×3 window at the last blob center
        let mut means = [0.0; 5];
        for s in &m.samples {
            let truth = s.truth.as_ref().unwrap();
            let (cy, cx) = truth.centers[2];
            let (cy, cx) = (cy as usize, cx as usize);
            let f = s.frames[2].data();
            let mut acc = 0.0;
            for y in cy.saturating_sub(1)..(cy + 2).min(16) {
                for x in cx.saturating_sub(1)..(cx + 2).min(16) {
                    acc += f[(y * 16 + x) * 3];
                }
            }
            means[s.label] += acc / 100.0;
        }
        assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
    }

    #[test]
    fn hotspot_patch_lookup() {
        let t = SyntheticTruth {
            centers: vec![(3.0, 9.5), (15.99, 0.0)],
            amplitudes: vec![0.1, 1.0],
        };
        assert_eq!(t.hotspot_patch(0, 4, 4), 2);
        assert_eq!(t.hotspot_patch(1, 4, 4), 12);
        assert_eq!(t.peak_frames(), [1]);
        assert_eq!(t.subsample(2).centers, [(3.0, 9.5)]);
    }
}
