//! Confusion matrices and macro-averaged scores.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// `confusion[truth][prediction]`, indexed by label value.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn confusion_matrix(truth: &[u8], pred: &[u8], n_classes: usize) -> Result<Vec<Vec<u64>>> {
    if truth.len() != pred.len() {
        return Err(domain(format!("{} truths vs {} predictions", truth.len(), pred.len())));
    }
    let mut c = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        let (t, p) = (t as usize, p as usize);
        if t >= n_classes || p >= n_classes {
            return Err(domain(format!("label {} outside {n_classes} classes", t.max(p))));
        }
        c[t][p] += 1;
    }
    Ok(c)
}

/// Per-class scores; `None` for classes absent from both truth and prediction.
pub fn class_scores(confusion: &[Vec<u64>]) -> Vec<Option<ClassScore>> {
    let k = confusion.len();
    (0..k)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let actual: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
            if actual == 0 && predicted == 0 {
                return None;
            }
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let recall = if actual > 0 { tp / actual as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            Some(ClassScore { precision, recall, f1 })
        })
        .collect()
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(domain("empty confusion matrix"));
        }
        let trace: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        let scores: Vec<ClassScore> = class_scores(&confusion).into_iter().flatten().collect();
        let mean = |f: fn(&ClassScore) -> f64| scores.iter().map(f).sum::<f64>() / scores.len() as f64;
        Ok(Self {
            accuracy: trace as f64 / total as f64,
            macro_precision: mean(|s| s.precision),
            macro_recall: mean(|s| s.recall),
            macro_f1: mean(|s| s.f1),
            confusion,
        })
    }

    pub fn from_predictions(truth: &[u8], pred: &[u8], n_classes: usize) -> Result<Self> {
        Self::from_confusion(confusion_matrix(truth, pred, n_classes)?)
    }

    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.macro_precision, self.macro_recall, self.macro_f1]
    }
}

pub const METRIC_NAMES: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_two_class_example() {
        let m = Metrics::from_confusion(vec![vec![2, 0], vec![1, 1]]).unwrap();
        assert!((m.accuracy - 0.75).abs() < 1e-12);
        assert!((m.macro_precision - 5.0 / 6.0).abs() < 1e-12);
        assert!((m.macro_recall - 0.75).abs() < 1e-12);
        assert!((m.macro_f1 - 11.0 / 15.0).abs() < 1e-12);
        // F1 of the macro means would be 0.7894..., not the mean F1.
        let f1_of_means = 2.0 * m.macro_precision * m.macro_recall / (m.macro_precision + m.macro_recall);
        assert!((f1_of_means - m.macro_f1).abs() > 0.05);
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1];
        let m = Metrics::from_predictions(&y, &y, 3).unwrap();
        assert_eq!(m.values(), [1.0; 4]);
    }

    #[test]
    fn absent_classes_are_skipped_and_unpredicted_count_zero() {
        // Class 2 never appears; class 1 is never predicted.
        let m = Metrics::from_predictions(&[0, 1], &[0, 0], 3).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.macro_precision - 0.25).abs() < 1e-12);
        assert!((m.macro_recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_and_empty() {
        assert!(Metrics::from_predictions(&[3], &[0], 2).is_err());
        assert!(Metrics::from_predictions(&[], &[], 2).is_err());
    }
}
