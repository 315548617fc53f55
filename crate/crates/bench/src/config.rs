//! Pipeline configuration: a plain-text `key = value` file.
//!
//! Keys are dotted (`radar.noise_sigma`). A `[section]` line prefixes the
//! keys below it, so `[radar]` followed by `noise_sigma = 0.01` is the same
//! as the dotted form. `#` starts a comment. Unknown keys, repeated keys and
//! unparsable values are reported with their line number.
//!
//! Broad keys apply before narrow ones regardless of file order:
//! `learn.trees` sets every classifier, `learn.random_forest.trees` only one;
//! `plan.records_per_class` sets every scenario, `plan.queue.records_per_class`
//! only the queue.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ctfdbf_core::features::{ExtractorConfig, DEFAULT_BIN_SIZES, DEFAULT_LAMBDA, DEFAULT_TAU, LAYOUT_VERSION};
use ctfdbf_core::learn::{ClassifierConfig, ClassifierKind};
use ctfdbf_core::preprocess::FilterConfig;
use ctfdbf_core::sim::{RadarConfig, Scenario, ScenarioPlan};
use ctfdbf_core::curvelet::CurveletConfig;
use sha2::{Digest, Sha256};

use crate::error::{config_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LearnConfig {
    /// Hyperparameters of every kind, in [`ClassifierKind::ALL`] order.
    pub params: Vec<ClassifierConfig>,
    /// Classifiers reported in the main tables.
    pub classifiers: Vec<ClassifierKind>,
    /// Classifiers also run on the CTF-only and DBF-only feature blocks.
    pub ablation: Vec<ClassifierKind>,
    pub repeats: usize,
    pub split: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            params: ClassifierKind::ALL.iter().map(|&k| ClassifierConfig::new(k)).collect(),
            classifiers: ClassifierKind::ALL.to_vec(),
            ablation: vec![ClassifierKind::RandomForest],
            repeats: 20,
            split: 0.8,
        }
    }
}

impl LearnConfig {
    pub fn config_for(&self, kind: ClassifierKind) -> &ClassifierConfig {
        &self.params[kind_index(kind)]
    }
}

fn kind_index(kind: ClassifierKind) -> usize {
    ClassifierKind::ALL.iter().position(|&k| k == kind).expect("kind listed in ALL")
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub radar: RadarConfig,
    /// The sample rate is always taken from `radar`.
    pub filter: FilterConfig,
    pub curvelet: CurveletConfig,
    pub bin_sizes: Vec<usize>,
    pub tau: f64,
    pub lambda: f64,
    pub layout_version: u16,
    /// One plan per scenario, in [`Scenario::ALL`] order.
    pub plans: Vec<ScenarioPlan>,
    pub learn: LearnConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let radar = RadarConfig::default();
        Self {
            seed: 0,
            filter: FilterConfig::for_radar(&radar),
            radar,
            curvelet: CurveletConfig::default(),
            bin_sizes: DEFAULT_BIN_SIZES.to_vec(),
            tau: DEFAULT_TAU,
            lambda: DEFAULT_LAMBDA,
            layout_version: LAYOUT_VERSION,
            plans: Scenario::ALL.iter().map(|&s| ScenarioPlan::default_for(s)).collect(),
            learn: LearnConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = scan(text)?;
        let mut cfg = Self::default();
        let mut lines = BTreeMap::new();
        let mut ordered: Vec<&Entry> = entries.iter().collect();
        ordered.sort_by_key(|e| e.key.matches('.').count());
        for e in ordered {
            cfg.set(&e.key, &e.value).map_err(|msg| config_err(e.line, format!("{}: {msg}", e.key)))?;
            lines.insert(e.key.clone(), e.line);
        }
        cfg.filter.sample_rate = cfg.radar.sample_rate();
        cfg.validate().map_err(|(key, msg)| {
            let line = key.and_then(|k| lines.get(k).copied()).unwrap_or(0);
            config_err(line, msg)
        })?;
        Ok(cfg)
    }

    pub fn plan(&self, scenario: Scenario) -> &ScenarioPlan {
        &self.plans[scenario.tag() as usize]
    }

    pub fn extractor(&self) -> ExtractorConfig {
        ExtractorConfig {
            filter: self.filter.clone(),
            curvelet: self.curvelet,
            bin_sizes: self.bin_sizes.clone(),
            tau: self.tau,
            lambda: self.lambda,
        }
    }

    /// Every key with its resolved value, one per line, in a fixed order.
    /// Parsing the canonical text gives back the same configuration.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        let r = &self.radar;
        put("radar.range_bins", r.range_bins.to_string());
        put("radar.bin_spacing", r.bin_spacing.to_string());
        put("radar.frames_per_record", r.frames_per_record.to_string());
        put("radar.frame_interval", r.frame_interval.to_string());
        put("radar.carrier_freq", r.carrier_freq.to_string());
        put("radar.bandwidth_10db", r.bandwidth_10db.to_string());
        put("radar.noise_sigma", r.noise_sigma.to_string());
        put("radar.clutter_reflector_count", r.clutter_reflector_count.to_string());
        put("radar.clutter_direct_amplitude", r.clutter_direct_amplitude.to_string());
        put("radar.clutter_jitter", r.clutter_jitter.to_string());
        put("radar.clutter_seed", r.clutter_seed.to_string());
        put("radar.sway_amplitude", r.sway_amplitude.to_string());
        put("filter.passband_low", self.filter.passband_low.to_string());
        put("filter.passband_high", self.filter.passband_high.to_string());
        put("filter.taps", self.filter.taps.to_string());
        put("filter.alpha", self.filter.alpha.to_string());
        put("curvelet.n_scales", self.curvelet.n_scales.to_string());
        put("curvelet.n_angles_detail", self.curvelet.n_angles_detail.to_string());
        put("features.bin_sizes", join(&self.bin_sizes));
        put("features.tau", self.tau.to_string());
        put("features.lambda", self.lambda.to_string());
        put("features.layout_version", self.layout_version.to_string());
        put("plan.sessions", self.plans[0].sessions.to_string());
        for p in &self.plans {
            put(&format!("plan.{}.max_people", p.scenario), p.max_people.to_string());
            put(&format!("plan.{}.records_per_class", p.scenario), p.records_per_class.to_string());
        }
        let l = &self.learn;
        put("learn.classifiers", join(&l.classifiers.iter().map(|k| k.name()).collect::<Vec<_>>()));
        put("learn.ablation", join(&l.ablation.iter().map(|k| k.name()).collect::<Vec<_>>()));
        put("learn.repeats", l.repeats.to_string());
        put("learn.split", l.split.to_string());
        for c in &l.params {
            let k = c.kind.name();
            put(&format!("learn.{k}.trees"), c.trees.to_string());
            put(&format!("learn.{k}.estimators"), c.estimators.to_string());
            put(&format!("learn.{k}.hidden"), join(&c.hidden));
            put(&format!("learn.{k}.max_depth"), opt(c.max_depth));
            put(&format!("learn.{k}.min_leaf"), c.min_leaf.to_string());
            put(&format!("learn.{k}.feature_subset_size"), opt(c.feature_subset_size));
            put(&format!("learn.{k}.bootstrap"), c.bootstrap.to_string());
            put(&format!("learn.{k}.learning_rate"), c.learning_rate.to_string());
            put(&format!("learn.{k}.epochs"), c.epochs.to_string());
            put(&format!("learn.{k}.batch_size"), c.batch_size.to_string());
        }
        out
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["seed"] => self.seed = num(v)?,
            ["radar", field] => self.set_radar(field, v)?,
            ["filter", "passband_low"] => self.filter.passband_low = real(v)?,
            ["filter", "passband_high"] => self.filter.passband_high = real(v)?,
            ["filter", "taps"] => self.filter.taps = num(v)?,
            ["filter", "alpha"] => self.filter.alpha = real(v)?,
            ["curvelet", "n_scales"] => self.curvelet.n_scales = num(v)?,
            ["curvelet", "n_angles_detail"] => self.curvelet.n_angles_detail = num(v)?,
            ["features", "bin_sizes"] => self.bin_sizes = list(v)?,
            ["features", "tau"] => self.tau = real(v)?,
            ["features", "lambda"] => self.lambda = real(v)?,
            ["features", "layout_version"] => self.layout_version = num(v)?,
            ["plan", "sessions"] => {
                let b = boolean(v)?;
                self.plans.iter_mut().for_each(|p| p.sessions = b);
            }
            ["plan", "records_per_class"] => {
                let n = num(v)?;
                self.plans.iter_mut().for_each(|p| p.records_per_class = n);
            }
            ["plan", "max_people"] => {
                let n = num(v)?;
                self.plans.iter_mut().for_each(|p| p.max_people = n);
            }
            ["plan", scen, field] => {
                let s: Scenario = scen.parse().map_err(|_| format!("unknown scenario {scen:?}"))?;
                let plan = &mut self.plans[s.tag() as usize];
                match *field {
                    "records_per_class" => plan.records_per_class = num(v)?,
                    "max_people" => plan.max_people = num(v)?,
                    _ => return Err("unknown key".into()),
                }
            }
            ["learn", "classifiers"] => self.learn.classifiers = kinds(v)?,
            ["learn", "ablation"] => self.learn.ablation = kinds(v)?,
            ["learn", "repeats"] => self.learn.repeats = num(v)?,
            ["learn", "split"] => self.learn.split = real(v)?,
            ["learn", field] => {
                for c in &mut self.learn.params {
                    set_classifier(c, field, v)?;
                }
            }
            ["learn", kind, field] => {
                let k: ClassifierKind = kind.parse().map_err(|_| format!("unknown classifier {kind:?}"))?;
                set_classifier(&mut self.learn.params[kind_index(k)], field, v)?;
            }
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn set_radar(&mut self, field: &str, v: &str) -> std::result::Result<(), String> {
        let r = &mut self.radar;
        match field {
            "range_bins" => r.range_bins = num(v)?,
            "bin_spacing" => r.bin_spacing = real(v)?,
            "frames_per_record" => r.frames_per_record = num(v)?,
            "frame_interval" => r.frame_interval = real(v)?,
            "carrier_freq" => r.carrier_freq = real(v)?,
            "bandwidth_10db" => r.bandwidth_10db = real(v)?,
            "noise_sigma" => r.noise_sigma = real(v)?,
            "clutter_reflector_count" => r.clutter_reflector_count = num(v)?,
            "clutter_direct_amplitude" => r.clutter_direct_amplitude = real(v)?,
            "clutter_jitter" => r.clutter_jitter = real(v)?,
            "clutter_seed" => r.clutter_seed = num(v)?,
            "sway_amplitude" => r.sway_amplitude = real(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// On failure returns the key most responsible, if any, and a message.
    fn validate(&self) -> std::result::Result<(), (Option<&'static str>, String)> {
        let wrap = |e: ctfdbf_core::Error| (None, e.to_string());
        self.radar.validate().map_err(wrap)?;
        if self.radar.frames_per_record % ctfdbf_core::sim::FRAMES_PER_SAMPLE != 0 {
            return Err((
                Some("radar.frames_per_record"),
                format!("frames_per_record must be a multiple of {}", ctfdbf_core::sim::FRAMES_PER_SAMPLE),
            ));
        }
        self.filter.validate().map_err(wrap)?;
        self.curvelet.validate().map_err(wrap)?;
        if self.bin_sizes.is_empty() || self.bin_sizes.iter().any(|&s| s == 0 || self.radar.range_bins % s != 0) {
            return Err((
                Some("features.bin_sizes"),
                format!("bin sizes must be positive divisors of {} range bins", self.radar.range_bins),
            ));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err((Some("features.tau"), format!("tau must lie in [0, 1), got {}", self.tau)));
        }
        if !(self.lambda >= 0.0) {
            return Err((Some("features.lambda"), "lambda must be non-negative".into()));
        }
        if self.layout_version != LAYOUT_VERSION {
            return Err((
                Some("features.layout_version"),
                format!("only feature layout {LAYOUT_VERSION} is supported, got {}", self.layout_version),
            ));
        }
        for p in &self.plans {
            if p.max_people > p.scenario.max_people() {
                return Err((
                    None,
                    format!("plan.{}.max_people exceeds {}", p.scenario, p.scenario.max_people()),
                ));
            }
            if p.max_people > u8::MAX as usize {
                return Err((None, "max_people must fit a u8 label".into()));
            }
        }
        let l = &self.learn;
        if l.classifiers.is_empty() {
            return Err((Some("learn.classifiers"), "at least one classifier is required".into()));
        }
        if l.ablation.is_empty() {
            return Err((Some("learn.ablation"), "at least one ablation classifier is required".into()));
        }
        if l.repeats == 0 {
            return Err((Some("learn.repeats"), "repeats must be at least 1".into()));
        }
        if !(l.split > 0.0 && l.split < 1.0) {
            return Err((Some("learn.split"), format!("split must lie in (0, 1), got {}", l.split)));
        }
        for c in &l.params {
            c.validate().map_err(|e| (None, format!("learn.{}: {e}", c.kind)))?;
        }
        Ok(())
    }
}

fn set_classifier(c: &mut ClassifierConfig, field: &str, v: &str) -> std::result::Result<(), String> {
    match field {
        "trees" => c.trees = num(v)?,
        "estimators" => c.estimators = num(v)?,
        "hidden" => c.hidden = list(v)?,
        "max_depth" => c.max_depth = opt_num(v)?,
        "min_leaf" => c.min_leaf = num(v)?,
        "feature_subset_size" => c.feature_subset_size = opt_num(v)?,
        "bootstrap" => c.bootstrap = boolean(v)?,
        "learning_rate" => c.learning_rate = real(v)?,
        "epochs" => c.epochs = num(v)?,
        "batch_size" => c.batch_size = num(v)?,
        _ => return Err("unknown key".into()),
    }
    Ok(())
}

struct Entry {
    line: usize,
    key: String,
    value: String,
}

fn scan(text: &str) -> Result<Vec<Entry>> {
    let mut section = String::new();
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| config_err(line, "unterminated section header"))?;
            section = name.trim().to_string();
            if !valid_key(&section) {
                return Err(config_err(line, format!("bad section name {section:?}")));
            }
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| config_err(line, "expected key = value"))?;
        let k = k.trim();
        if !valid_key(k) {
            return Err(config_err(line, format!("bad key {k:?}")));
        }
        let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        if let Some(first) = seen.insert(key.clone(), line) {
            return Err(config_err(line, format!("{key} already set on line {first}")));
        }
        out.push(Entry { line, key, value: v.trim().to_string() });
    }
    Ok(out)
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.split('.').all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("expected a non-negative integer, got {v:?}"))
}

fn real(v: &str) -> std::result::Result<f64, String> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("expected a finite number, got {v:?}")),
    }
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn opt_num(v: &str) -> std::result::Result<Option<usize>, String> {
    if v == "none" {
        Ok(None)
    } else {
        num(v).map(Some)
    }
}

fn list(v: &str) -> std::result::Result<Vec<usize>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| num(p.trim())).collect()
}

fn kinds(v: &str) -> std::result::Result<Vec<ClassifierKind>, String> {
    let mut out: Vec<ClassifierKind> = Vec::new();
    for p in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let k = p.parse().map_err(|_| format!("unknown classifier {p:?}"))?;
        if out.contains(&k) {
            return Err(format!("{p} listed twice"));
        }
        out.push(k);
    }
    Ok(out)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "none".into(), |n| n.to_string())
}
