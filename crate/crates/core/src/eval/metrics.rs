use std::fmt;

use crate::error::{Error, Result};

/// `k × k` counts; rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Builds from row-major rows.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Param("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            classes: k,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(Error::Param(format!(
                "class pair ({truth}, {predicted}) outside 0..{}",
                self.classes
            )));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Param("cannot merge confusion matrices of different size".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub task: String,
    pub samples: u64,
    pub micro_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "task,samples,accuracy,precision,recall,f1";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.task, self.samples, self.micro_accuracy, self.macro_precision, self.macro_recall, self.macro_f1
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: n={} acc={:.4} precision={:.4} recall={:.4} f1={:.4}",
            self.task, self.samples, self.micro_accuracy, self.macro_precision, self.macro_recall, self.macro_f1
        )
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Micro accuracy and macro precision/recall/F1. A class metric with a zero
/// denominator counts as 0 in the macro mean.
pub fn compute_metrics(cm: &ConfusionMatrix, task: &str) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 || cm.classes() == 0 {
        return Err(Error::Param(
            "cannot compute metrics of an empty confusion matrix".into(),
        ));
    }
    let k = cm.classes();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let tp = cm.get(c, c);
        let predicted: u64 = (0..k).map(|t| cm.get(t, c)).sum();
        let actual: u64 = (0..k).map(|p| cm.get(c, p)).sum();
        let (p, r) = (ratio(tp, predicted), ratio(tp, actual));
        p_sum += p;
        r_sum += r;
        f_sum += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    Ok(MetricsReport {
        task: task.to_string(),
        samples: total,
        micro_accuracy: cm.correct() as f64 / total as f64,
        macro_precision: p_sum / k as f64,
        macro_recall: r_sum / k as f64,
        macro_f1: f_sum / k as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let cm = ConfusionMatrix::from_rows(&[vec![3, 1], vec![2, 4]]).unwrap();
        let m = compute_metrics(&cm, "t").unwrap();
        assert!((m.micro_accuracy - 0.7).abs() < 1e-12);
        assert!((m.macro_precision - 0.7).abs() < 1e-12);
        assert!((m.macro_recall - 0.708_33).abs() < 1e-5);
        assert!((m.macro_f1 - 0.696_97).abs() < 1e-5);
    }

    #[test]
    fn diagonal_is_perfect_and_empty_fails() {
        let cm = ConfusionMatrix::from_rows(&[vec![4, 0, 0], vec![0, 2, 0], vec![0, 0, 9]]).unwrap();
        let m = compute_metrics(&cm, "t").unwrap();
        for v in [m.micro_accuracy, m.macro_precision, m.macro_recall, m.macro_f1] {
            assert_eq!(v, 1.0);
        }
        assert!(matches!(
            compute_metrics(&ConfusionMatrix::new(3), "t"),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn absent_class_contributes_zero() {
        let cm = ConfusionMatrix::from_rows(&[vec![5, 0, 0], vec![0, 5, 0], vec![0, 0, 0]]).unwrap();
        let m = compute_metrics(&cm, "t").unwrap();
        assert_eq!(m.micro_accuracy, 1.0);
        assert!((m.macro_recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn record_merge_and_bounds() {
        let mut a = ConfusionMatrix::new(2);
        a.record(0, 1).unwrap();
        a.record(1, 1).unwrap();
        assert!(a.record(2, 0).is_err());
        let mut b = ConfusionMatrix::new(2);
        b.record(0, 0).unwrap();
        b.merge(&a).unwrap();
        assert_eq!(b.rows(), vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(b.total(), 3);
        assert!(b.merge(&ConfusionMatrix::new(3)).is_err());
    }
}
