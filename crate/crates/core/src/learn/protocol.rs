//! Repeated stratified train/test evaluation.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::{evaluate, train, ClassifierConfig, LabeledDataset};
use crate::error::{domain, Result};
use crate::seed::{derive_seed, rng_for};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single repeat.
    pub std: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSummary {
    pub accuracy: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
    pub train_size: usize,
    pub test_size: usize,
    pub repeats: Vec<Metrics>,
}

impl ProtocolSummary {
    pub fn summaries(&self) -> [MetricSummary; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

/// Splits each class separately so every class present lands in the
/// training fold. Returns sorted (train, test) row indices.
pub fn stratified_split<R: Rng>(labels: &[u8], split: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in classes {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rows.shuffle(rng);
        let n = rows.len();
        let mut k = (split * n as f64).round() as usize;
        k = k.clamp(1, if n > 1 { n - 1 } else { 1 });
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Trains and tests `repeats` times on fresh splits. Repeat `r` uses split
/// and model seeds derived from `(seed, r)`, so repeats can run in parallel.
pub fn run_protocol(
    data: &LabeledDataset,
    cfg: &ClassifierConfig,
    split: f64,
    repeats: usize,
    seed: u64,
) -> Result<ProtocolSummary> {
    if !(split > 0.0 && split < 1.0) {
        return Err(domain(format!("split must lie in (0, 1), got {split}")));
    }
    if repeats == 0 {
        return Err(domain("repeats must be at least 1"));
    }
    cfg.validate()?;
    let results: Vec<(Metrics, usize, usize)> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let (tr, te) = stratified_split(&data.labels, split, &mut rng_for(seed, &[r as u64, 0]));
            if te.is_empty() {
                return Err(domain("test fold is empty"));
            }
            let model = train(&cfg.clone().with_seed(derive_seed(seed, &[r as u64, 1])), &data.subset(&tr))?;
            Ok((evaluate(&model, &data.subset(&te))?, tr.len(), te.len()))
        })
        .collect::<Result<_>>()?;
    let column = |i: usize| MetricSummary::of(&results.iter().map(|(m, ..)| m.values()[i]).collect::<Vec<_>>());
    Ok(ProtocolSummary {
        accuracy: column(0),
        precision: column(1),
        recall: column(2),
        f1: column(3),
        train_size: results[0].1,
        test_size: results[0].2,
        repeats: results.into_iter().map(|(m, ..)| m).collect(),
    })
}
