mod common;

use pain_tnt::bench::bench_inference;
use pain_tnt::checkpoint;
use pain_tnt::data::{
    generate_synthetic, load_frame_directory, save_dataset, DatasetManifest, SynthConfig, Task, VideoSample,
    MANIFEST_FILE,
};
use pain_tnt::eval::{run_loso, run_task, Classifier, ConfusionMatrix};
use pain_tnt::interpret::{export_map_image, read_pgm, relevance_maps, RelevanceMap};
use pain_tnt::model::PainModel;
use pain_tnt::train::fit;
use pain_tnt::Result;

use common::toy_config;

fn small_dataset(subjects: usize) -> DatasetManifest {
    generate_synthetic(&SynthConfig {
        subjects,
        per_class: 1,
        frames: 4,
        size: 16,
        ..SynthConfig::default()
    })
}

fn trained_toy(data: &DatasetManifest) -> PainModel {
    let cfg = toy_config(Task::MultiClass, 2, 1);
    let mut model = PainModel::from_config(&cfg).unwrap();
    fit(&mut model, &data.samples, None, &cfg.train, |_| {}).unwrap();
    model
}

#[test]
fn saved_dataset_trains_and_checkpoint_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let generated = small_dataset(2);
    save_dataset(&generated, tmp.path()).unwrap();
    let loaded = load_frame_directory(tmp.path(), &tmp.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded.len(), generated.len());
    assert_eq!(loaded.subject_ids(), vec![0, 1]);
    for (a, b) in loaded.samples.iter().zip(&generated.samples) {
        assert_eq!(
            (a.label, a.subject_id, a.frame_count()),
            (b.label, b.subject_id, b.frame_count())
        );
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert!(common::max_abs_diff(fa.data(), fb.data()) <= 0.5 / 255.0 + 1e-12);
        }
    }

    let cfg = toy_config(Task::MultiClass, 2, 1);
    let mut model = PainModel::from_config(&cfg).unwrap();
    let log = fit(&mut model, &loaded.samples, Some(&loaded.samples), &cfg.train, |_| {}).unwrap();
    assert_eq!(log.to_csv().lines().count(), 3);

    let path = tmp.path().join("model.ckpt");
    checkpoint::save(&path, &cfg, &model).unwrap();
    let (cfg2, model2) = checkpoint::load(&path).unwrap();
    assert_eq!(cfg2, cfg);
    assert_eq!(checkpoint::to_bytes(&cfg2, &model2), checkpoint::to_bytes(&cfg, &model));
    let video = &loaded.samples[3].frames;
    assert_eq!(model.logits(video).unwrap(), model2.logits(video).unwrap());
}

/// Nearest class centroid on the mean pixel value of each frame position.
struct MeanIntensity {
    centroids: Vec<(usize, Vec<f64>)>,
    seeds: std::rc::Rc<std::cell::RefCell<Vec<u64>>>,
}

fn intensity_profile(sample: &VideoSample) -> Vec<f64> {
    sample
        .frames
        .iter()
        .map(|f| f.data().iter().sum::<f64>() / f.len() as f64)
        .collect()
}

impl Classifier for MeanIntensity {
    fn train(&mut self, samples: &[VideoSample], seed: u64) -> Result<()> {
        self.seeds.borrow_mut().push(seed);
        for label in 0..5 {
            let members: Vec<Vec<f64>> = samples
                .iter()
                .filter(|s| s.label == label)
                .map(intensity_profile)
                .collect();
            let n = members.len() as f64;
            let mut c = vec![0.0; members[0].len()];
            for m in &members {
                c.iter_mut().zip(m).for_each(|(a, v)| *a += v / n);
            }
            self.centroids.push((label, c));
        }
        Ok(())
    }

    fn predict(&mut self, sample: &VideoSample) -> Result<usize> {
        let p = intensity_profile(sample);
        let dist = |c: &[f64]| c.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        Ok(self
            .centroids
            .iter()
            .min_by(|a, b| dist(&a.1).total_cmp(&dist(&b.1)))
            .unwrap()
            .0)
    }
}

#[test]
fn loso_pools_every_fold_and_derives_fold_seeds() {
    let data = generate_synthetic(&SynthConfig {
        subjects: 4,
        per_class: 3,
        frames: 6,
        size: 16,
        ..SynthConfig::default()
    });
    let seeds = std::rc::Rc::new(std::cell::RefCell::new(Vec::new()));
    let mut seen = Vec::new();
    let report = run_loso(
        &data,
        "mc",
        5,
        40,
        |_| {
            Ok(MeanIntensity {
                centroids: Vec::new(),
                seeds: seeds.clone(),
            })
        },
        |fold| seen.push(fold.fold.test_subject),
    )
    .unwrap();

    assert_eq!(seen, vec![0, 1, 2, 3]);
    assert_eq!(*seeds.borrow(), vec![40, 41, 42, 43]);
    assert_eq!(report.confusion.total(), data.len() as u64);
    let mut summed = ConfusionMatrix::new(5);
    for f in &report.folds {
        assert_eq!(f.confusion.total(), 15);
        summed.merge(&f.confusion).unwrap();
    }
    assert_eq!(summed, report.confusion);
    let mean = report.folds.iter().map(|f| f.metrics.micro_accuracy).sum::<f64>() / 4.0;
    assert!((report.mean_fold_accuracy - mean).abs() < 1e-15);
    // chance is 0.2; blob brightness grows with the pain level
    assert!(report.pooled.micro_accuracy > 0.3, "{:?}", report.pooled);
}

#[test]
fn full_model_loso_on_the_binary_task() {
    let data = small_dataset(3);
    let cfg = toy_config(Task::MultiClass, 2, 2);
    let report = run_task(&data, Task::NpVs(4), &cfg, |_| {}).unwrap();
    assert_eq!(report.folds.len(), 3);
    assert_eq!(report.confusion.classes(), 2);
    assert_eq!(report.confusion.total(), 6);
    assert!((0.0..=1.0).contains(&report.pooled.micro_accuracy));
}

#[test]
fn relevance_maps_are_distributions_and_export_as_images() {
    let data = small_dataset(1);
    let model = trained_toy(&data);
    let video = &data.samples[4];
    let maps = relevance_maps(&model, &video.frames, 4).unwrap();
    assert_eq!(maps.len(), video.frame_count());
    for m in &maps {
        assert_eq!((m.grid_side, m.patch_size, m.target_class), (2, 8, 4));
        assert!(m.values.iter().all(|v| *v >= 0.0));
        assert!((m.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let mean = RelevanceMap::mean(&maps).unwrap();
    assert!((mean.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    let tmp = tempfile::tempdir().unwrap();
    let (map_path, overlay_path) = export_map_image(&mean, &tmp.path().join("m.pgm"), Some(&video.frames[0])).unwrap();
    let (w, h, pixels) = read_pgm(&map_path).unwrap();
    assert_eq!((w, h, pixels.len()), (2, 2, 4));
    assert_eq!(*pixels.iter().max().unwrap(), 255);
    let (w, h, _) = read_pgm(&overlay_path).unwrap();
    assert_eq!((w, h), (16, 16));

    assert!(relevance_maps(&model, &video.frames, 5).is_err());
}

#[test]
fn stride_sweep_reports_frames_sizes_and_timings() {
    let data = generate_synthetic(&SynthConfig {
        subjects: 1,
        per_class: 1,
        frames: 8,
        size: 16,
        ..SynthConfig::default()
    });
    let model = trained_toy(&data);
    let rows = bench_inference(&model, &data.samples, &[1, 2, 3], 2).unwrap();
    let shape: Vec<(usize, usize, usize)> = rows.iter().map(|r| (r.stride, r.frames, r.feature_size)).collect();
    assert_eq!(shape, vec![(1, 8, 128), (2, 4, 64), (3, 3, 48)]);
    for r in &rows {
        assert!((0.0..=1.0).contains(&r.accuracy));
        assert!(r.runtime_mean_ms > 0.0 && r.runtime_std_ms >= 0.0);
    }
    assert!(bench_inference(&model, &data.samples, &[1], 0).is_err());
    assert!(bench_inference(&model, &data.samples, &[0], 1).is_err());
}
