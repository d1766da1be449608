//! Leave-one-subject-out evaluation and classification metrics.

mod metrics;

use std::fmt::Write as _;

use crate::config::RunConfig;
use crate::data::{DatasetManifest, Task, VideoSample};
use crate::error::{Error, Result};
use crate::model::PainModel;
use crate::train::fit;

pub use metrics::{compute_metrics, ConfusionMatrix, MetricsReport};

/// One cross-validation split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub index: usize,
    pub test_subject: usize,
    pub train_subjects: Vec<usize>,
}

/// One fold per subject, in ascending subject order.
pub fn loso_folds(manifest: &DatasetManifest) -> Result<Vec<Fold>> {
    let ids = manifest.subject_ids();
    if ids.len() < 2 {
        return Err(Error::Protocol(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            ids.len()
        )));
    }
    Ok(ids
        .iter()
        .enumerate()
        .map(|(index, &test_subject)| Fold {
            index,
            test_subject,
            train_subjects: ids.iter().copied().filter(|&s| s != test_subject).collect(),
        })
        .collect())
}

/// Anything that can be trained on videos and then label new ones.
pub trait Classifier {
    fn train(&mut self, samples: &[VideoSample], seed: u64) -> Result<()>;
    fn predict(&mut self, sample: &VideoSample) -> Result<usize>;
}

#[derive(Clone, Debug)]
pub struct FoldReport {
    pub fold: Fold,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug)]
pub struct LosoReport {
    pub task: String,
    pub folds: Vec<FoldReport>,
    pub confusion: ConfusionMatrix,
    /// Metrics of the predictions pooled over every fold.
    pub pooled: MetricsReport,
    /// Unweighted mean of the per-fold micro accuracies.
    pub mean_fold_accuracy: f64,
}

/// Trains a fresh classifier per fold (seed `seed ^ fold index`) and scores
/// it on the held-out subject.
pub fn run_loso<C: Classifier>(
    manifest: &DatasetManifest,
    task: &str,
    classes: usize,
    seed: u64,
    mut make: impl FnMut(&Fold) -> Result<C>,
    mut on_fold: impl FnMut(&FoldReport),
) -> Result<LosoReport> {
    let folds = loso_folds(manifest)?;
    let mut pooled = ConfusionMatrix::new(classes);
    let mut reports = Vec::with_capacity(folds.len());
    for fold in folds {
        let train = manifest.filter_subjects(&fold.train_subjects, true);
        let test = manifest.filter_subjects(&[fold.test_subject], true);
        let mut clf = make(&fold)?;
        clf.train(&train, seed ^ fold.index as u64)?;
        let mut cm = ConfusionMatrix::new(classes);
        for s in &test {
            cm.record(s.label, clf.predict(s)?)?;
        }
        pooled.merge(&cm)?;
        let report = FoldReport {
            metrics: compute_metrics(&cm, &format!("{task} subject {}", fold.test_subject))?,
            fold,
            confusion: cm,
        };
        on_fold(&report);
        reports.push(report);
    }
    let mean_fold_accuracy = reports.iter().map(|r| r.metrics.micro_accuracy).sum::<f64>() / reports.len() as f64;
    Ok(LosoReport {
        task: task.to_string(),
        pooled: compute_metrics(&pooled, task)?,
        confusion: pooled,
        folds: reports,
        mean_fold_accuracy,
    })
}

/// The full model trained with [`fit`] from a run configuration.
pub struct TntClassifier {
    pub config: RunConfig,
    pub model: Option<PainModel>,
}

impl Classifier for TntClassifier {
    fn train(&mut self, samples: &[VideoSample], seed: u64) -> Result<()> {
        let mut cfg = self.config.clone();
        cfg.train.seed = seed;
        let mut model = PainModel::from_config(&cfg)?;
        fit(&mut model, samples, None, &cfg.train, |_| {})?;
        self.model = Some(model);
        Ok(())
    }

    fn predict(&mut self, sample: &VideoSample) -> Result<usize> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Usage("classifier used before training".into()))?
            .predict(&sample.frames)
    }
}

/// LOSO evaluation of the full model on one task.
pub fn run_task(
    manifest: &DatasetManifest,
    task: Task,
    config: &RunConfig,
    on_fold: impl FnMut(&FoldReport),
) -> Result<LosoReport> {
    let data = task.prepare(manifest)?;
    let cfg = config.for_task(task);
    cfg.validate()?;
    run_loso(
        &data,
        &task.to_string(),
        task.num_classes(),
        cfg.train.seed,
        |_| {
            Ok(TntClassifier {
                config: cfg.clone(),
                model: None,
            })
        },
        on_fold,
    )
}

/// Table with one row per metric (Acc, Pre, Rec, F1) and one column per
/// task, values in percent.
pub fn metrics_table_csv(columns: &[(Task, MetricsReport)]) -> String {
    let mut out = String::from("metric");
    for (task, _) in columns {
        let _ = write!(out, ",{}", task.title());
    }
    out.push('\n');
    let rows: [(&str, fn(&MetricsReport) -> f64); 4] = [
        ("Acc", |m| m.micro_accuracy),
        ("Pre", |m| m.macro_precision),
        ("Rec", |m| m.macro_recall),
        ("F1", |m| m.macro_f1),
    ];
    for (name, get) in rows {
        out.push_str(name);
        for (_, m) in columns {
            let _ = write!(out, ",{:.2}", 100.0 * get(m));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Rng, Tensor};

    fn manifest(subjects: usize, per_label: usize, labels: usize) -> DatasetManifest {
        let mut samples = Vec::new();
        for s in 0..subjects {
            for label in 0..labels {
                for _ in 0..per_label {
                    samples.push(VideoSample {
                        frames: vec![Tensor::zeros(&[1, 1, 3])],
                        label,
                        subject_id: 100 + s,
                        truth: None,
                    });
                }
            }
        }
        DatasetManifest::from_samples(samples)
    }

    struct Perfect;
    impl Classifier for Perfect {
        fn train(&mut self, _: &[VideoSample], _: u64) -> Result<()> {
            Ok(())
        }
        fn predict(&mut self, s: &VideoSample) -> Result<usize> {
            Ok(s.label)
        }
    }

    struct Constant(usize);
    impl Classifier for Constant {
        fn train(&mut self, _: &[VideoSample], _: u64) -> Result<()> {
            Ok(())
        }
        fn predict(&mut self, _: &VideoSample) -> Result<usize> {
            Ok(self.0)
        }
    }

    struct Uniform(Rng, usize);
    impl Classifier for Uniform {
        fn train(&mut self, _: &[VideoSample], seed: u64) -> Result<()> {
            self.0 = Rng::new(seed);
            Ok(())
        }
        fn predict(&mut self, _: &VideoSample) -> Result<usize> {
            Ok(self.0.below(self.1))
        }
    }

    #[test]
    fn folds_partition_subjects() {
        let m = manifest(4, 1, 2);
        let folds = loso_folds(&m).unwrap();
        assert_eq!(folds.len(), 4);
        for f in &folds {
            assert!(!f.train_subjects.contains(&f.test_subject));
            assert_eq!(f.train_subjects.len(), 3);
        }
        let tests: Vec<usize> = folds.iter().map(|f| f.test_subject).collect();
        assert_eq!(tests, [100, 101, 102, 103]);
        assert!(matches!(loso_folds(&manifest(1, 2, 2)), Err(Error::Protocol(_))));
        let two = loso_folds(&manifest(2, 1, 2)).unwrap();
        assert_eq!(two[0].train_subjects, [101]);
        assert_eq!(two[1].train_subjects, [100]);
    }

    #[test]
    fn perfect_stub_scores_one() {
        let m = manifest(3, 2, 5);
        let r = run_loso(&m, "mc", 5, 0, |_| Ok(Perfect), |_| {}).unwrap();
        assert_eq!(r.pooled.micro_accuracy, 1.0);
        assert_eq!(r.pooled.macro_f1, 1.0);
        assert_eq!(r.folds.len(), 3);
        assert_eq!(r.confusion.total(), 30);
    }

    #[test]
    fn constant_stub_on_balanced_binary() {
        let m = manifest(3, 4, 2);
        let r = run_loso(&m, "np-p4", 2, 0, |_| Ok(Constant(0)), |_| {}).unwrap();
        assert_eq!(r.pooled.micro_accuracy, 0.5);
        assert_eq!(r.pooled.macro_recall, 0.5);
        assert_eq!(r.pooled.macro_precision, 0.25);
        assert_eq!(r.mean_fold_accuracy, 0.5);
    }

    #[test]
    fn uniform_stub_near_chance() {
        let m = manifest(4, 60, 5);
        let r = run_loso(&m, "mc", 5, 9, |_| Ok(Uniform(Rng::new(0), 5)), |_| {}).unwrap();
        // 1200 draws: standard error sqrt(0.2·0.8/1200) ≈ 0.0115
        assert!(
            (r.pooled.micro_accuracy - 0.2).abs() < 0.05,
            "{}",
            r.pooled.micro_accuracy
        );
    }

    #[test]
    fn table_layout() {
        let m = MetricsReport {
            task: "mc".into(),
            samples: 10,
            micro_accuracy: 0.5,
            macro_precision: 0.25,
            macro_recall: 0.5,
            macro_f1: 1.0 / 3.0,
        };
        let csv = metrics_table_csv(&[(Task::NpVs(1), m.clone()), (Task::MultiClass, m)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "metric,NP vs P1,MC");
        assert_eq!(lines[1], "Acc,50.00,50.00");
        assert_eq!(lines[4], "F1,33.33,33.33");
    }
}
