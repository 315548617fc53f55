//! The three data-producing stages: simulate, extract and evaluate.
//!
//! Work runs on the current rayon pool. Every random draw is keyed by the
//! master seed and the item's position (scenario, head count, record,
//! classifier, repeat), never by the worker that happens to run it, so the
//! outputs do not depend on the pool size.

use std::path::Path;
use std::time::Instant;

use ctfdbf_core::features::{extract_sample, feature_len, feature_names, CTF_LEN, LAYOUT_VERSION};
use ctfdbf_core::learn::{run_protocol, ClassifierKind, LabeledDataset, ProtocolSummary};
use ctfdbf_core::preprocess::Stage;
use ctfdbf_core::seed::derive_seed;
use ctfdbf_core::sim::{slice_frames, RecordSpec, Scenario, FRAMES_PER_SAMPLE};
use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::container::{FeatureTable, RecordReader, RecordWriter};
use crate::error::{format_err, Result};
use crate::report::{Cell, CellTiming, RepeatMetrics, RunReport, Timings};

/// Seed domain of the evaluation stage, kept apart from the simulator's.
const EVAL_DOMAIN: u64 = 0x6576_616c;

/// Records of the selected scenarios, in file order.
pub fn record_specs(cfg: &PipelineConfig, scenarios: &[Scenario]) -> Vec<RecordSpec> {
    Scenario::ALL
        .iter()
        .filter(|s| scenarios.contains(s))
        .flat_map(|&s| cfg.plan(s).records(cfg.seed))
        .collect()
}

/// Writes the raw records of the selected scenarios to a `UWBR` container.
/// Returns the number of records.
pub fn simulate(cfg: &PipelineConfig, scenarios: &[Scenario], out: &Path) -> Result<usize> {
    let specs = record_specs(cfg, scenarios);
    let r = &cfg.radar;
    let mut writer = RecordWriter::create(out, specs.len(), r.frames_per_record, r.range_bins, Stage::Raw)?;
    let chunk = 2 * rayon::current_num_threads();
    for batch in specs.chunks(chunk) {
        let records = batch.par_iter().map(|s| s.generate(r)).collect::<ctfdbf_core::Result<Vec<_>>>()?;
        for (spec, rec) in batch.iter().zip(&records) {
            writer.push(&rec.data, spec.n_people as u8, spec.scenario)?;
        }
    }
    writer.finish()?;
    Ok(specs.len())
}

/// Cuts every record into 50-frame samples and extracts their hybrid
/// feature vectors. Values are rounded to f32, the container's precision,
/// so the in-memory table equals what a reload gives back. Also returns the
/// column names.
pub fn extract(cfg: &PipelineConfig, dataset: &Path) -> Result<(FeatureTable, Vec<String>)> {
    let mut reader = RecordReader::open(dataset)?;
    if reader.stage != Stage::Raw {
        return Err(format_err(format!("expected raw records, container holds {:?} data", reader.stage)));
    }
    if reader.frames % FRAMES_PER_SAMPLE != 0 {
        return Err(format_err(format!(
            "records have {} frames, not a multiple of {FRAMES_PER_SAMPLE}",
            reader.frames
        )));
    }
    let width = feature_len(&cfg.bin_sizes, reader.bins);
    let per_record = reader.frames / FRAMES_PER_SAMPLE;
    let ext = cfg.extractor();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(reader.records * per_record);
    let mut labels = Vec::with_capacity(rows.capacity());
    let mut scenarios = Vec::with_capacity(rows.capacity());
    let chunk = (rayon::current_num_threads() / per_record.max(1)).max(1) * 2;
    loop {
        let mut batch = Vec::with_capacity(chunk);
        while batch.len() < chunk {
            match reader.next_record() {
                Some(r) => batch.push(r?),
                None => break,
            }
        }
        if batch.is_empty() {
            break;
        }
        let mut samples = Vec::with_capacity(batch.len() * per_record);
        for (data, label, scenario) in &batch {
            for m in slice_frames(data, *label)? {
                samples.push(m);
                labels.push(*label);
                scenarios.push(*scenario);
            }
        }
        let values = samples
            .par_iter()
            .map(|m| extract_sample(m, &ext).map(|f| f.values.iter().map(|&v| v as f32 as f64).collect()))
            .collect::<ctfdbf_core::Result<Vec<Vec<f64>>>>()?;
        rows.extend(values);
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let features = Array2::from_shape_vec((rows.len(), width), flat)
        .map_err(|_| format_err("feature rows disagree with the configured layout"))?;
    let names = feature_names(&cfg.bin_sizes, reader.bins);
    Ok((FeatureTable::new(features, labels, scenarios, LAYOUT_VERSION)?, names))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSet {
    Hybrid,
    Ctf,
    Dbf,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Hybrid, FeatureSet::Ctf, FeatureSet::Dbf];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Hybrid => "hybrid",
            FeatureSet::Ctf => "ctf",
            FeatureSet::Dbf => "dbf",
        }
    }

    fn tag(self) -> u64 {
        self as u64
    }

    pub fn columns(self, width: usize) -> Vec<usize> {
        match self {
            FeatureSet::Hybrid => (0..width).collect(),
            FeatureSet::Ctf => (0..CTF_LEN).collect(),
            FeatureSet::Dbf => (CTF_LEN..width).collect(),
        }
    }
}

/// Runs the repeated-split protocol for every (scenario, classifier) pair on
/// the hybrid features, and for the ablation classifiers on each feature
/// block. Scenarios without rows are skipped, leaving gaps in the report.
pub fn evaluate(cfg: &PipelineConfig, table: &FeatureTable, scenarios: &[Scenario]) -> Result<(RunReport, Timings)> {
    if table.layout_version != cfg.layout_version {
        return Err(format_err(format!(
            "feature layout {} does not match configured layout {}",
            table.layout_version, cfg.layout_version
        )));
    }
    let width = feature_len(&cfg.bin_sizes, cfg.radar.range_bins);
    if table.features.ncols() != width {
        return Err(format_err(format!(
            "feature file has {} columns, configuration implies {width}",
            table.features.ncols()
        )));
    }
    let selected: Vec<Scenario> = Scenario::ALL.iter().copied().filter(|s| scenarios.contains(s)).collect();
    let mut report = RunReport::new(cfg, &selected);
    let mut timings = Timings::default();
    for &scenario in &selected {
        let rows = table.rows_of(scenario);
        if rows.is_empty() {
            continue;
        }
        let data = LabeledDataset::new(
            table.features.select(Axis(0), &rows),
            rows.iter().map(|&i| table.labels[i]).collect(),
            Some(scenario),
        )?;
        if data.classes().len() < 2 {
            return Err(format_err(format!("{scenario} has fewer than two classes")));
        }
        let mut jobs: Vec<(ClassifierKind, FeatureSet)> =
            cfg.learn.classifiers.iter().map(|&k| (k, FeatureSet::Hybrid)).collect();
        for &k in &cfg.learn.ablation {
            for set in FeatureSet::ALL {
                if !jobs.contains(&(k, set)) {
                    jobs.push((k, set));
                }
            }
        }
        let mut cells = Vec::with_capacity(jobs.len());
        for &(kind, set) in &jobs {
            let subset = if set == FeatureSet::Hybrid { data.clone() } else { data.columns(&set.columns(width)) };
            let seed = derive_seed(cfg.seed, &[EVAL_DOMAIN, scenario.tag() as u64, kind.tag() as u64, set.tag()]);
            let start = Instant::now();
            let summary =
                run_protocol(&subset, cfg.learn.config_for(kind), cfg.learn.split, cfg.learn.repeats, seed)?;
            timings.cells.push(CellTiming {
                scenario: scenario.to_string(),
                classifier: kind.name().into(),
                features: set.name().into(),
                seconds: start.elapsed().as_secs_f64(),
            });
            cells.push(((kind, set), cell(scenario, kind, set, &data, &summary)));
        }
        for &k in &cfg.learn.classifiers {
            report.results.push(lookup(&cells, k, FeatureSet::Hybrid));
        }
        for &k in &cfg.learn.ablation {
            for set in FeatureSet::ALL {
                report.ablation.push(lookup(&cells, k, set));
            }
        }
    }
    Ok((report, timings))
}

fn lookup(cells: &[((ClassifierKind, FeatureSet), Cell)], k: ClassifierKind, set: FeatureSet) -> Cell {
    cells.iter().find(|(key, _)| *key == (k, set)).expect("every job was run").1.clone()
}

fn cell(scenario: Scenario, kind: ClassifierKind, set: FeatureSet, data: &LabeledDataset, s: &ProtocolSummary) -> Cell {
    Cell {
        scenario: scenario.to_string(),
        classifier: kind.name().into(),
        features: set.name().into(),
        samples: data.len(),
        classes: data.classes(),
        train_size: s.train_size,
        test_size: s.test_size,
        accuracy: s.accuracy,
        precision: s.precision,
        recall: s.recall,
        f1: s.f1,
        repeats: s.repeats.iter().map(RepeatMetrics::from).collect(),
    }
}
