//! Run reports: JSON, CSV tables and aligned text.

use std::fmt::Write as _;
use std::io::Write;

use ctfdbf_core::learn::{MetricSummary, Metrics};
use ctfdbf_core::sim::Scenario;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::Result;

pub const REPORT_FORMAT: &str = "ctfdbf-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    /// SHA-256 of the feature container the report was computed from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_sha256: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub repeats: usize,
    pub split: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&Metrics> for RepeatMetrics {
    fn from(m: &Metrics) -> Self {
        let [accuracy, precision, recall, f1] = m.values();
        Self { accuracy, precision, recall, f1 }
    }
}

/// One (scenario, classifier, feature set) result; `repeats[r]` holds the
/// metrics of repeat `r`, from which the summaries are computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub scenario: String,
    pub classifier: String,
    pub features: String,
    pub samples: usize,
    pub classes: Vec<u8>,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
    #[serde(default)]
    pub repeats: Vec<RepeatMetrics>,
}

impl Cell {
    pub fn metrics(&self) -> [MetricSummary; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub provenance: Provenance,
    pub protocol: Protocol,
    /// Scenarios and classifiers the tables are laid out for. A missing
    /// result for a listed pair renders as "n/a".
    #[serde(default)]
    pub scenarios: Vec<String>,
    #[serde(default)]
    pub classifiers: Vec<String>,
    /// Hybrid-feature results.
    #[serde(default)]
    pub results: Vec<Cell>,
    /// Hybrid, CTF-only and DBF-only results of the ablation classifiers.
    #[serde(default)]
    pub ablation: Vec<Cell>,
}

impl RunReport {
    pub fn new(cfg: &PipelineConfig, scenarios: &[Scenario]) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            provenance: Provenance {
                config_hash: cfg.hash(),
                seed: cfg.seed,
                version: concat!("ctfdbf ", env!("CARGO_PKG_VERSION")).into(),
                features_sha256: None,
            },
            protocol: Protocol { repeats: cfg.learn.repeats, split: cfg.learn.split },
            scenarios: scenarios.iter().map(|s| s.to_string()).collect(),
            classifiers: cfg.learn.classifiers.iter().map(|k| k.name().to_string()).collect(),
            results: Vec::new(),
            ablation: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is always serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn cell(&self, scenario: &str, classifier: &str) -> Option<&Cell> {
        self.results.iter().find(|c| c.scenario == scenario && c.classifier == classifier)
    }

    pub fn ablation_cell(&self, scenario: &str, classifier: &str, features: &str) -> Option<&Cell> {
        self.ablation
            .iter()
            .find(|c| c.scenario == scenario && c.classifier == classifier && c.features == features)
    }

    /// Declared scenarios, or those seen in the results when none are declared.
    pub fn scenario_list(&self) -> Vec<String> {
        if self.scenarios.is_empty() {
            first_seen(self.results.iter().chain(&self.ablation).map(|c| &c.scenario))
        } else {
            self.scenarios.clone()
        }
    }

    pub fn classifier_list(&self) -> Vec<String> {
        if self.classifiers.is_empty() {
            first_seen(self.results.iter().map(|c| &c.classifier))
        } else {
            self.classifiers.clone()
        }
    }

    /// Per-scenario table shaped like the classifier comparison tables.
    pub fn write_table_csv<W: Write>(&self, scenario: &str, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["classifier".to_string()];
        for m in ctfdbf_core::learn::metrics::METRIC_NAMES {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_std"));
        }
        out.write_record(&header)?;
        for c in self.results.iter().filter(|c| c.scenario == scenario) {
            let mut row = vec![c.classifier.clone()];
            for m in c.metrics() {
                row.push(m.mean.to_string());
                row.push(m.std.to_string());
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Accuracy by scenario and feature set.
    pub fn write_ablation_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scenario", "classifier", "features", "accuracy_mean", "accuracy_std"])?;
        for c in &self.ablation {
            out.write_record([
                c.scenario.clone(),
                c.classifier.clone(),
                c.features.clone(),
                c.accuracy.mean.to_string(),
                c.accuracy.std.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Every repeat of every cell, one row each.
    pub fn write_metrics_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scenario", "classifier", "features", "repeat", "accuracy", "precision", "recall", "f1"])?;
        let mut seen: Vec<(&str, &str, &str)> = Vec::new();
        for c in self.results.iter().chain(&self.ablation) {
            let key = (c.scenario.as_str(), c.classifier.as_str(), c.features.as_str());
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            for (r, m) in c.repeats.iter().enumerate() {
                out.write_record([
                    c.scenario.clone(),
                    c.classifier.clone(),
                    c.features.clone(),
                    r.to_string(),
                    m.accuracy.to_string(),
                    m.precision.to_string(),
                    m.recall.to_string(),
                    m.f1.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Aligned text tables with mean ± std per metric.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "config {}  seed {}  {}  ({} repeats, {:.0}/{:.0} split)",
            short(&self.provenance.config_hash),
            self.provenance.seed,
            self.provenance.version,
            self.protocol.repeats,
            100.0 * self.protocol.split,
            100.0 * (1.0 - self.protocol.split)
        );
        out.push('\n');
        let mut rows = vec![["scenario", "classifier", "accuracy", "precision", "recall", "f1"].map(String::from).to_vec()];
        for s in self.scenario_list() {
            for k in self.classifier_list() {
                let mut row = vec![s.clone(), k.clone()];
                match self.cell(&s, &k) {
                    Some(c) => row.extend(c.metrics().iter().map(pm)),
                    None => row.extend(std::iter::repeat_n("n/a".to_string(), 4)),
                }
                rows.push(row);
            }
        }
        out.push_str(&align(&rows));

        let ablators = first_seen(self.ablation.iter().map(|c| &c.classifier));
        if !ablators.is_empty() {
            out.push_str("\nfeature ablation (accuracy)\n");
            let mut rows = vec![["scenario", "classifier", "hybrid", "ctf", "dbf"].map(String::from).to_vec()];
            for s in self.scenario_list() {
                for k in &ablators {
                    let mut row = vec![s.clone(), k.clone()];
                    for f in ["hybrid", "ctf", "dbf"] {
                        row.push(self.ablation_cell(&s, k, f).map_or_else(|| "n/a".into(), |c| pm(&c.accuracy)));
                    }
                    rows.push(row);
                }
            }
            out.push_str(&align(&rows));
        }
        out
    }
}

fn first_seen<'a>(items: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.contains(s) {
            out.push(s.clone());
        }
    }
    out
}

fn short(hash: &str) -> &str {
    hash.get(..12).unwrap_or(hash)
}

fn pm(m: &MetricSummary) -> String {
    format!("{:.4} ± {:.4}", m.mean, m.std)
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|j| rows.iter().filter_map(|r| r.get(j)).map(|c| c.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(j, c)| format!("{c}{}", " ".repeat(widths[j] - c.chars().count())))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub scenario: String,
    pub classifier: String,
    pub features: String,
    pub seconds: f64,
}

/// Wall-clock timings, kept out of the report so reports stay reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    #[serde(default)]
    pub stages: Vec<StageTiming>,
    #[serde(default)]
    pub cells: Vec<CellTiming>,
}

impl Timings {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("timings are always serializable");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(mean: f64) -> MetricSummary {
        MetricSummary { mean, std: 0.01 }
    }

    fn cell(scenario: &str, classifier: &str, features: &str, acc: f64) -> Cell {
        Cell {
            scenario: scenario.into(),
            classifier: classifier.into(),
            features: features.into(),
            samples: 10,
            classes: vec![0, 1],
            train_size: 8,
            test_size: 2,
            accuracy: summary(acc),
            precision: summary(acc),
            recall: summary(acc),
            f1: summary(acc),
            repeats: vec![RepeatMetrics { accuracy: acc, precision: acc, recall: acc, f1: acc }],
        }
    }

    fn report(scenarios: &[&str], classifiers: &[&str]) -> RunReport {
        let mut r = RunReport::new(&PipelineConfig::default(), &[]);
        r.scenarios = scenarios.iter().map(|s| s.to_string()).collect();
        r.classifiers = classifiers.iter().map(|s| s.to_string()).collect();
        r
    }

    #[test]
    fn one_cell_gives_one_row() {
        let mut r = report(&["walk3"], &["random_forest"]);
        r.results.push(cell("walk3", "random_forest", "hybrid", 0.9));
        let text = r.render();
        let body: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(body.len(), 2, "{text}");
        assert!(body[1].starts_with("walk3     random_forest  0.9000 ± 0.0100"), "{text}");
    }

    #[test]
    fn missing_scenario_renders_na() {
        let mut r = report(&["walk3", "queue"], &["decision_tree"]);
        r.results.push(cell("walk3", "decision_tree", "hybrid", 0.5));
        let text = r.render();
        let queue = text.lines().find(|l| l.starts_with("queue")).unwrap();
        assert_eq!(queue.matches("n/a").count(), 4);
    }

    #[test]
    fn undeclared_lists_come_from_results() {
        let mut r = report(&[], &[]);
        r.results.push(cell("walk4", "adaboost", "hybrid", 0.7));
        r.ablation.push(cell("walk4", "adaboost", "ctf", 0.4));
        assert_eq!(r.scenario_list(), vec!["walk4"]);
        let text = r.render();
        assert!(text.contains("0.4000 ± 0.0100"));
        assert!(text.lines().any(|l| l.starts_with("walk4") && l.contains("n/a")));
    }

    #[test]
    fn json_round_trips_and_rejects_garbage() {
        let mut r = report(&["walk3"], &["random_forest"]);
        r.results.push(cell("walk3", "random_forest", "hybrid", 0.9));
        assert_eq!(RunReport::from_json(&r.to_json()).unwrap(), r);
        let err = RunReport::from_json("{\"format\": 3").unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(RunReport::from_json("{}").is_err());
    }

    #[test]
    fn csv_tables() {
        let mut r = report(&["walk3"], &["random_forest"]);
        r.results.push(cell("walk3", "random_forest", "hybrid", 0.5));
        r.ablation.push(cell("walk3", "random_forest", "hybrid", 0.5));
        r.ablation.push(cell("walk3", "random_forest", "dbf", 0.25));
        let mut t = Vec::new();
        r.write_table_csv("walk3", &mut t).unwrap();
        let t = String::from_utf8(t).unwrap();
        assert_eq!(t.lines().next().unwrap(), "classifier,accuracy_mean,accuracy_std,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std");
        assert_eq!(t.lines().nth(1).unwrap(), "random_forest,0.5,0.01,0.5,0.01,0.5,0.01,0.5,0.01");
        let mut m = Vec::new();
        r.write_metrics_csv(&mut m).unwrap();
        // The hybrid ablation cell duplicates the main one and is listed once.
        assert_eq!(String::from_utf8(m).unwrap().lines().count(), 3);
    }
}
