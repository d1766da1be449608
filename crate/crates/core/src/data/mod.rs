//! Labeled videos: synthetic generation, frame-directory I/O, frame
//! subsampling and task construction.

mod io;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use io::{load_frame_directory, load_video, read_ppm, save_dataset, write_ppm, MANIFEST_FILE};
pub use synthetic::{generate_synthetic, SynthConfig, SyntheticTruth};

/// Number of pain levels: no pain plus four intensities.
pub const NUM_LEVELS: usize = 5;

#[derive(Clone, Debug)]
pub struct VideoSample {
    /// Frames `[H, W, 3]` in time order, values in `[0, 1]`.
    pub frames: Vec<Tensor>,
    /// Class index; a pain level `0..=4` before task relabeling.
    pub label: usize,
    pub subject_id: usize,
    /// Per-frame hotspot locations, present for generated videos.
    pub truth: Option<SyntheticTruth>,
}

impl VideoSample {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// `(H, W)` of the first frame.
    pub fn frame_size(&self) -> (usize, usize) {
        self.frames.first().map_or((0, 0), |f| (f.shape()[0], f.shape()[1]))
    }
}

#[derive(Clone, Debug, Default)]
pub struct DatasetManifest {
    pub samples: Vec<VideoSample>,
    pub subjects: usize,
    /// Videos per (subject, label); 0 when the layout is irregular.
    pub per_class_per_subject: usize,
}

impl DatasetManifest {
    pub fn from_samples(samples: Vec<VideoSample>) -> Self {
        let mut cells: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for s in &samples {
            *cells.entry((s.subject_id, s.label)).or_default() += 1;
        }
        let subjects: BTreeSet<usize> = samples.iter().map(|s| s.subject_id).collect();
        let labels: BTreeSet<usize> = samples.iter().map(|s| s.label).collect();
        let first = cells.values().next().copied().unwrap_or(0);
        let regular = cells.len() == subjects.len() * labels.len() && cells.values().all(|&c| c == first);
        DatasetManifest {
            subjects: subjects.len(),
            per_class_per_subject: if regular { first } else { 0 },
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct subject ids in ascending order.
    pub fn subject_ids(&self) -> Vec<usize> {
        let ids: BTreeSet<usize> = self.samples.iter().map(|s| s.subject_id).collect();
        ids.into_iter().collect()
    }

    /// Samples whose subject is (or is not) in `subjects`.
    pub fn filter_subjects(&self, subjects: &[usize], keep: bool) -> Vec<VideoSample> {
        self.samples
            .iter()
            .filter(|s| subjects.contains(&s.subject_id) == keep)
            .cloned()
            .collect()
    }
}

/// Keeps frames `0, stride, 2·stride, …`; `ceil(k / stride)` frames remain.
pub fn stride_sample(sample: &VideoSample, stride: usize) -> Result<VideoSample> {
    if stride < 1 {
        return Err(Error::Param(format!("stride must be at least 1, got {stride}")));
    }
    Ok(VideoSample {
        frames: sample.frames.iter().step_by(stride).cloned().collect(),
        truth: sample.truth.as_ref().map(|t| t.subsample(stride)),
        ..sample.clone()
    })
}

/// Keeps labels `{0, level}` relabeled to `{0, 1}`.
pub fn make_binary_task(manifest: &DatasetManifest, level: usize) -> Result<DatasetManifest> {
    if !(1..NUM_LEVELS).contains(&level) {
        return Err(Error::Param(format!("binary task level must be 1..=4, got {level}")));
    }
    let samples: Vec<VideoSample> = manifest
        .samples
        .iter()
        .filter(|s| s.label == 0 || s.label == level)
        .map(|s| VideoSample {
            label: usize::from(s.label == level),
            ..s.clone()
        })
        .collect();
    let has = |l: usize| samples.iter().any(|s| s.label == l);
    if !has(0) || !has(1) {
        return Err(Error::Protocol("task requires both classes".into()));
    }
    Ok(DatasetManifest::from_samples(samples))
}

/// The five classification problems: no pain against one intensity, or all
/// five levels at once.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    NpVs(usize),
    MultiClass,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::NpVs(1),
        Task::NpVs(2),
        Task::NpVs(3),
        Task::NpVs(4),
        Task::MultiClass,
    ];

    pub fn num_classes(&self) -> usize {
        match self {
            Task::NpVs(_) => 2,
            Task::MultiClass => NUM_LEVELS,
        }
    }

    /// Restricts and relabels a pain-level dataset for this task.
    pub fn prepare(&self, manifest: &DatasetManifest) -> Result<DatasetManifest> {
        match *self {
            Task::NpVs(level) => make_binary_task(manifest, level),
            Task::MultiClass => {
                if let Some(s) = manifest.samples.iter().find(|s| s.label >= NUM_LEVELS) {
                    return Err(Error::Manifest(format!("label {} outside 0..=4", s.label)));
                }
                Ok(manifest.clone())
            }
        }
    }

    /// Column title used in reports, e.g. `NP vs P4` or `MC`.
    pub fn title(&self) -> String {
        match self {
            Task::NpVs(level) => format!("NP vs P{level}"),
            Task::MultiClass => "MC".into(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::NpVs(level) => write!(f, "np-p{level}"),
            Task::MultiClass => f.write_str("mc"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(Task::MultiClass),
            "np-p1" => Ok(Task::NpVs(1)),
            "np-p2" => Ok(Task::NpVs(2)),
            "np-p3" => Ok(Task::NpVs(3)),
            "np-p4" => Ok(Task::NpVs(4)),
            other => Err(Error::Usage(format!(
                "unknown task `{other}` (expected np-p1..np-p4 or mc)"
            ))),
        }
    }
}
