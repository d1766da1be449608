//! Frame directories on disk: one binary P6 pixmap per frame, files in
//! lexicographic order, and a `dir,label,subject_id` CSV manifest.

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, VideoSample, NUM_LEVELS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.csv";
const FRAME_EXT: &str = "ppm";

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    dir: String,
    label: i64,
    subject_id: usize,
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a `[H, W, 3]` frame with values in `[0, 1]` as 8-bit P6.
pub fn write_ppm(path: &Path, frame: &Tensor) -> Result<()> {
    let &[h, w, 3] = frame.shape() else {
        return Err(Error::shape("write_ppm", frame.shape(), &[0, 0, 3]));
    };
    let bytes: Vec<u8> = frame.data().iter().map(|&v| quantize(v)).collect();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(&bytes, w as u32, h as u32, ExtendedColorType::Rgb8)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Reads any 8-bit portable pixmap into `[H, W, 3]` scaled to `[0, 1]`.
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .into_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|b| f64::from(b) / 255.0).collect();
    Tensor::new(data, &[h as usize, w as usize, 3])
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case(FRAME_EXT)) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads the frames of one video directory in file-name order. Every frame
/// must have the size of the first.
pub fn load_video(dir: &Path) -> Result<Vec<Tensor>> {
    let files = frame_files(dir)?;
    if files.is_empty() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no .ppm frames"),
        ));
    }
    let frames = files.iter().map(|f| read_ppm(f)).collect::<Result<Vec<_>>>()?;
    if let Some(bad) = frames.iter().position(|f| f.shape() != frames[0].shape()) {
        return Err(Error::Image {
            path: files[bad].clone(),
            message: format!(
                "size {:?} differs from first frame {:?}",
                frames[bad].shape(),
                frames[0].shape()
            ),
        });
    }
    Ok(frames)
}

/// Loads every video listed in `manifest_file`; directories are relative to
/// `root`.
pub fn load_frame_directory(root: &Path, manifest_file: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(manifest_file).map_err(|e| Error::io(manifest_file, e))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Manifest(format!("{}: {e}", manifest_file.display())))?;
    if headers != vec!["dir", "label", "subject_id"] {
        return Err(Error::Manifest(format!(
            "{}: header must be `dir,label,subject_id`",
            manifest_file.display()
        )));
    }
    let mut samples = Vec::new();
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Manifest(format!("{}: {e}", manifest_file.display())))?;
        if !(0..NUM_LEVELS as i64).contains(&row.label) {
            return Err(Error::Manifest(format!(
                "{} line {}: label {} outside 0..=4",
                manifest_file.display(),
                line + 2,
                row.label
            )));
        }
        let frames = load_video(&root.join(&row.dir))?;
        samples.push(VideoSample {
            frames,
            label: row.label as usize,
            subject_id: row.subject_id,
            truth: None,
        });
    }
    Ok(DatasetManifest::from_samples(samples))
}

/// Directory name used for the `index`-th video of a dataset.
pub fn video_dir_name(sample: &VideoSample, index: usize) -> String {
    format!("s{:03}_l{}_v{index:05}", sample.subject_id, sample.label)
}

/// Writes frames and `manifest.csv` under `dir` in the layout read by
/// [`load_frame_directory`].
pub fn save_dataset(manifest: &DatasetManifest, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut writer = csv::Writer::from_writer(Vec::new());
    for (i, sample) in manifest.samples.iter().enumerate() {
        let name = video_dir_name(sample, i);
        let vdir = dir.join(&name);
        fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;
        for (k, frame) in sample.frames.iter().enumerate() {
            write_ppm(&vdir.join(format!("frame_{k:05}.{FRAME_EXT}")), frame)?;
        }
        writer
            .serialize(Row {
                dir: name,
                label: sample.label as i64,
                subject_id: sample.subject_id,
            })
            .map_err(|e| Error::Manifest(e.to_string()))?;
    }
    let mut bytes = writer.into_inner().map_err(|e| Error::Manifest(e.to_string()))?;
    if manifest.is_empty() {
        bytes = b"dir,label,subject_id\n".to_vec();
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}
