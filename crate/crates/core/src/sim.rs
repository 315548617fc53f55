//! Synthetic IR-UWB scenes and raw radar records.
//!
//! A record is the superposition of people echoes, static clutter and white
//! Gaussian noise. Each person contributes a Gaussian-enveloped carrier pulse
//! per frame at the delay of its range, scaled by free-space loss, by a
//! shadowing factor per body standing between it and the radar, and by a
//! per-person reflectivity; a few weaker, later multipath copies follow it.

use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Result};
use crate::preprocess::{RadarMatrix, Stage};
use crate::seed::{derive_seed, rng_for};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Frames per radar sample (1.25 s at 40 frames/s).
pub const FRAMES_PER_SAMPLE: usize = 50;

/// Amplitude kept per person standing in front of a target.
pub const SHADOW_FACTOR: f64 = 0.5;

/// Two people closer than this laterally occlude one another.
pub const BODY_WIDTH: f64 = 0.4;

pub const MIN_WALK_SPEED: f64 = 0.2;
pub const MAX_WALK_SPEED: f64 = 1.4;

pub const QUEUE_START: f64 = 0.5;
pub const QUEUE_SPACING: f64 = 0.10;
pub const QUEUE_JITTER: f64 = 0.02;

const WALK_RANGE_START: f64 = 1.0;
/// Lateral width over range depth of the walking area.
const WALK_ASPECT: f64 = 1.5;
const RCS_MIN: f64 = 0.7;
const RCS_MAX: f64 = 1.3;
/// Envelope half-width, in standard deviations, that is actually rendered.
const PULSE_SUPPORT: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    pub range_bins: usize,
    /// Range covered by one fast-time sample, metres.
    pub bin_spacing: f64,
    pub frames_per_record: usize,
    /// Slow-time sampling period, seconds.
    pub frame_interval: f64,
    pub carrier_freq: f64,
    /// Full width of the pulse spectrum at -10 dB power.
    pub bandwidth_10db: f64,
    pub noise_sigma: f64,
    pub clutter_reflector_count: usize,
    /// Amplitude of the transmitter-to-receiver leakage pulse.
    pub clutter_direct_amplitude: f64,
    /// Per-frame relative gain jitter of the clutter template.
    pub clutter_jitter: f64,
    /// Seed of the room: the clutter template is shared by all records.
    pub clutter_seed: u64,
    /// Peak breathing/sway displacement of a person around its position, metres.
    pub sway_amplitude: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            range_bins: 1280,
            bin_spacing: 0.0039,
            frames_per_record: 200,
            frame_interval: 0.025,
            carrier_freq: 6.8e9,
            bandwidth_10db: 2.3e9,
            noise_sigma: 0.002,
            clutter_reflector_count: 8,
            clutter_direct_amplitude: 1.0,
            clutter_jitter: 0.002,
            clutter_seed: 0x5eed_c1a7,
            sway_amplitude: 0.004,
        }
    }
}

impl RadarConfig {
    /// Fast-time sampling rate implied by the range grid (round trip).
    pub fn sample_rate(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bin_spacing)
    }

    pub fn max_range(&self) -> f64 {
        self.range_bins as f64 * self.bin_spacing
    }

    /// Standard deviation of the pulse envelope, seconds.
    ///
    /// A Gaussian envelope with time spread `s` has power spectrum
    /// `exp(-(2 pi s f)^2)`; its -10 dB full width is `2 sqrt(ln 10) / (2 pi s)`.
    pub fn pulse_sigma(&self) -> f64 {
        (10f64).ln().sqrt() / (PI * self.bandwidth_10db)
    }

    /// Envelope standard deviation in fast-time samples.
    pub fn pulse_sigma_bins(&self) -> f64 {
        self.pulse_sigma() * self.sample_rate()
    }

    /// Carrier frequency in cycles per fast-time sample.
    pub fn carrier_cycles_per_bin(&self) -> f64 {
        self.carrier_freq / self.sample_rate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.range_bins < crate::preprocess::MIN_RANGE_BINS {
            return Err(domain(format!("range_bins too small: {}", self.range_bins)));
        }
        if !(self.bin_spacing > 0.0 && self.frame_interval > 0.0) {
            return Err(domain("bin_spacing and frame_interval must be positive"));
        }
        if self.frames_per_record < FRAMES_PER_SAMPLE {
            return Err(domain(format!(
                "frames_per_record must be at least {FRAMES_PER_SAMPLE}, got {}",
                self.frames_per_record
            )));
        }
        if !(self.carrier_freq > 0.0 && self.bandwidth_10db > 0.0)
            || self.carrier_freq >= self.sample_rate() / 2.0
        {
            return Err(domain("carrier must be positive and below Nyquist"));
        }
        if !(self.noise_sigma >= 0.0 && self.clutter_jitter >= 0.0 && self.sway_amplitude >= 0.0) {
            return Err(domain("noise, jitter and sway must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    /// Free walking at 3 persons per square metre.
    Walk3,
    /// Free walking at 4 persons per square metre.
    Walk4,
    /// Standing in a queue about 10 cm apart.
    Queue,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Walk3, Scenario::Walk4, Scenario::Queue];

    pub fn max_people(self) -> usize {
        match self {
            Scenario::Walk3 | Scenario::Walk4 => 20,
            Scenario::Queue => 15,
        }
    }

    pub fn density(self) -> Option<f64> {
        match self {
            Scenario::Walk3 => Some(3.0),
            Scenario::Walk4 => Some(4.0),
            Scenario::Queue => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Walk3 => "walk3",
            Scenario::Walk4 => "walk4",
            Scenario::Queue => "queue",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Scenario::Walk3 => 0,
            Scenario::Walk4 => 1,
            Scenario::Queue => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "walk3" => Ok(Scenario::Walk3),
            "walk4" => Ok(Scenario::Walk4),
            "queue" => Ok(Scenario::Queue),
            other => Err(domain(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    /// Distance from the radar along boresight, metres.
    pub range: f64,
    pub lateral: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub range_min: f64,
    pub range_max: f64,
    pub lateral_min: f64,
    pub lateral_max: f64,
}

impl Area {
    pub fn area(&self) -> f64 {
        (self.range_max - self.range_min) * (self.lateral_max - self.lateral_min)
    }

    pub fn contains(&self, p: Position) -> bool {
        (self.range_min..=self.range_max).contains(&p.range)
            && (self.lateral_min..=self.lateral_max).contains(&p.lateral)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Position {
        Position {
            range: rng.random_range(self.range_min..=self.range_max),
            lateral: rng.random_range(self.lateral_min..=self.lateral_max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneTrajectory {
    pub scenario: Scenario,
    pub n_people: usize,
    pub frame_interval: f64,
    /// Walking area; `None` for queues and hand-built scenes.
    pub area: Option<Area>,
    /// `positions[frame][person]`.
    pub positions: Vec<Vec<Position>>,
    /// `blockers[frame][person]`: people between that person and the radar.
    pub blockers: Vec<Vec<u32>>,
}

impl SceneTrajectory {
    /// Builds a scene from explicit per-frame positions, computing occlusion.
    pub fn from_positions(
        scenario: Scenario,
        frame_interval: f64,
        positions: Vec<Vec<Position>>,
    ) -> Result<Self> {
        let n_people = positions.first().map_or(0, Vec::len);
        if positions.iter().any(|f| f.len() != n_people) {
            return Err(domain("every frame must list the same people"));
        }
        let blockers = positions.iter().map(|f| count_blockers(f)).collect();
        Ok(Self { scenario, n_people, frame_interval, area: None, positions, blockers })
    }

    pub fn frames(&self) -> usize {
        self.positions.len()
    }
}

fn count_blockers(frame: &[Position]) -> Vec<u32> {
    frame
        .iter()
        .map(|p| {
            frame
                .iter()
                .filter(|q| q.range < p.range && (q.lateral - p.lateral).abs() < BODY_WIDTH)
                .count() as u32
        })
        .collect()
}

/// Walking area for `n` people at the scenario density.
pub fn walk_area(n_people: usize, density: f64) -> Area {
    let area = n_people as f64 / density;
    let depth = (area / WALK_ASPECT).sqrt();
    let width = WALK_ASPECT * depth;
    Area {
        range_min: WALK_RANGE_START,
        range_max: WALK_RANGE_START + depth,
        lateral_min: -width / 2.0,
        lateral_max: width / 2.0,
    }
}

struct Walker {
    pos: Position,
    target: Position,
    speed: f64,
}

pub fn generate_scene(
    scenario: Scenario,
    n_people: usize,
    seed: u64,
    cfg: &RadarConfig,
) -> Result<SceneTrajectory> {
    generate_session_window(scenario, n_people, seed, 0, cfg)
}

/// Frames `[window * F, (window + 1) * F)` of one continuous session, where
/// `F` is `frames_per_record`. Window 0 is [`generate_scene`].
pub fn generate_session_window(
    scenario: Scenario,
    n_people: usize,
    session_seed: u64,
    window: usize,
    cfg: &RadarConfig,
) -> Result<SceneTrajectory> {
    if n_people > scenario.max_people() {
        return Err(domain(format!(
            "{scenario} supports at most {} people, got {n_people}",
            scenario.max_people()
        )));
    }
    let frames = cfg.frames_per_record;
    let mut rng = rng_for(session_seed, &[0x5ce9e]);
    let (area, positions) = match scenario.density() {
        Some(density) => {
            let area = walk_area(n_people, density);
            let start = window * frames;
            let mut path = random_waypoints(&area, n_people, start + frames, cfg.frame_interval, &mut rng);
            (Some(area), path.split_off(start))
        }
        None => {
            let mut range = QUEUE_START;
            let line: Vec<Position> = (0..n_people)
                .map(|i| {
                    if i > 0 {
                        range += QUEUE_SPACING + rng.random_range(-QUEUE_JITTER..=QUEUE_JITTER);
                    }
                    Position { range, lateral: rng.random_range(-0.05..=0.05) }
                })
                .collect();
            (None, vec![line; frames])
        }
    };
    let blockers = positions.iter().map(|f| count_blockers(f)).collect();
    Ok(SceneTrajectory {
        scenario,
        n_people,
        frame_interval: cfg.frame_interval,
        area,
        positions,
        blockers,
    })
}

fn random_waypoints(
    area: &Area,
    n_people: usize,
    frames: usize,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Position>> {
    let mut walkers: Vec<Walker> = (0..n_people)
        .map(|_| Walker {
            pos: area.sample(rng),
            target: area.sample(rng),
            speed: rng.random_range(MIN_WALK_SPEED..=MAX_WALK_SPEED),
        })
        .collect();
    let mut out = Vec::with_capacity(frames);
    for frame in 0..frames {
        if frame > 0 {
            for w in walkers.iter_mut() {
                let (dr, dl) = (w.target.range - w.pos.range, w.target.lateral - w.pos.lateral);
                let dist = dr.hypot(dl);
                let step = w.speed * dt;
                if dist <= step {
                    w.pos = w.target;
                    w.target = area.sample(rng);
                    w.speed = rng.random_range(MIN_WALK_SPEED..=MAX_WALK_SPEED);
                } else {
                    w.pos.range += dr / dist * step;
                    w.pos.lateral += dl / dist * step;
                }
            }
        }
        out.push(walkers.iter().map(|w| w.pos).collect());
    }
    out
}

/// Static clutter: direct leakage plus fixed background reflectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ClutterProfile {
    pub static_template: Vec<f64>,
    pub jitter_sigma: f64,
}

impl ClutterProfile {
    /// The room shared by every record generated with `cfg`.
    pub fn room(cfg: &RadarConfig) -> Self {
        let mut template = vec![0.0; cfg.range_bins];
        let mut rng = rng_for(cfg.clutter_seed, &[0xc1u64]);
        let pulse = PulseShape::new(cfg);
        if cfg.clutter_direct_amplitude != 0.0 {
            pulse.add(&mut template, 0.1 / cfg.bin_spacing, cfg.clutter_direct_amplitude);
        }
        for _ in 0..cfg.clutter_reflector_count {
            let range = rng.random_range(0.3..cfg.max_range());
            let amp = rng.random_range(0.02..0.2) * rng.random_range(0.5..1.0);
            pulse.add(&mut template, range / cfg.bin_spacing, amp);
        }
        Self { static_template: template, jitter_sigma: cfg.clutter_jitter }
    }
}

/// Carrier-modulated Gaussian pulse sampled on the range grid.
#[derive(Clone, Copy, Debug)]
pub struct PulseShape {
    sigma_bins: f64,
    cycles_per_bin: f64,
}

impl PulseShape {
    pub fn new(cfg: &RadarConfig) -> Self {
        Self { sigma_bins: cfg.pulse_sigma_bins(), cycles_per_bin: cfg.carrier_cycles_per_bin() }
    }

    /// Adds `amp * env(i - delay) * cos(2 pi f (i - delay))`; samples past
    /// the end of the frame are dropped.
    pub fn add(&self, frame: &mut [f64], delay_bins: f64, amp: f64) {
        let half = (PULSE_SUPPORT * self.sigma_bins).ceil();
        let lo = (delay_bins - half).floor().max(0.0) as usize;
        let hi = ((delay_bins + half).ceil() as usize).min(frame.len().saturating_sub(1));
        if delay_bins - half > frame.len() as f64 || lo > hi {
            return;
        }
        let inv = 1.0 / (2.0 * self.sigma_bins * self.sigma_bins);
        for (i, v) in frame.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let x = i as f64 - delay_bins;
            *v += amp * (-x * x * inv).exp() * (2.0 * PI * self.cycles_per_bin * x).cos();
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadarRecord {
    /// `frames_per_record x range_bins`.
    pub data: Array2<f64>,
    pub scene: SceneTrajectory,
    pub config: RadarConfig,
    pub seed: u64,
}

struct Path {
    extra_range: f64,
    gain: f64,
}

struct Reflector {
    rcs: f64,
    paths: Vec<Path>,
    sway_freq: f64,
    sway_phase: f64,
    sway_amp: f64,
}

impl Reflector {
    fn draw(rng: &mut ChaCha8Rng, sway: f64) -> Self {
        let rcs = rng.random_range(RCS_MIN.ln()..=RCS_MAX.ln()).exp();
        let ghosts = rng.random_range(1..=3);
        let mut paths = vec![Path { extra_range: 0.0, gain: 1.0 }];
        for _ in 0..ghosts {
            paths.push(Path {
                extra_range: rng.random_range(0.15..0.6),
                gain: rng.random_range(0.1..0.3),
            });
        }
        Self {
            rcs,
            paths,
            sway_freq: rng.random_range(0.2..0.4),
            sway_phase: rng.random_range(0.0..2.0 * PI),
            sway_amp: sway * rng.random_range(0.5..=1.0),
        }
    }
}

pub fn synthesize_record(scene: &SceneTrajectory, cfg: &RadarConfig, seed: u64) -> Result<RadarRecord> {
    synthesize_session_window(scene, cfg, seed, seed, 0)
}

/// Like [`synthesize_record`], but the people (reflectivity, multipath,
/// sway) come from `people_seed` and the scene starts `start_frame` frames
/// into the session, so consecutive windows of one session share testers
/// and sway phase. Noise and clutter jitter come from `seed`.
pub fn synthesize_session_window(
    scene: &SceneTrajectory,
    cfg: &RadarConfig,
    people_seed: u64,
    seed: u64,
    start_frame: usize,
) -> Result<RadarRecord> {
    cfg.validate()?;
    if scene.frames() != cfg.frames_per_record {
        return Err(domain(format!(
            "scene has {} frames, config expects {}",
            scene.frames(),
            cfg.frames_per_record
        )));
    }
    let mut data = Array2::zeros((cfg.frames_per_record, cfg.range_bins));
    let pulse = PulseShape::new(cfg);

    let mut rng = rng_for(people_seed, &[1]);
    let people: Vec<Reflector> =
        (0..scene.n_people).map(|_| Reflector::draw(&mut rng, cfg.sway_amplitude)).collect();
    for (f, (frame_pos, frame_blk)) in scene.positions.iter().zip(&scene.blockers).enumerate() {
        let t = (start_frame + f) as f64 * cfg.frame_interval;
        let mut row = data.row_mut(f);
        let row = row.as_slice_mut().expect("rows of a fresh array are contiguous");
        for ((p, &blk), person) in frame_pos.iter().zip(frame_blk).zip(&people) {
            let sway = person.sway_amp * (2.0 * PI * person.sway_freq * t + person.sway_phase).sin();
            let range = (p.range + sway).max(0.1);
            let amp = person.rcs * range.powi(-2) * SHADOW_FACTOR.powi(blk as i32);
            for path in &person.paths {
                pulse.add(row, (range + path.extra_range) / cfg.bin_spacing, amp * path.gain);
            }
        }
    }

    let clutter = ClutterProfile::room(cfg);
    if clutter.static_template.iter().any(|&v| v != 0.0) {
        let mut rng = rng_for(seed, &[3]);
        let jitter = Normal::new(0.0, clutter.jitter_sigma.max(0.0)).expect("finite jitter");
        for mut row in data.rows_mut() {
            let gain = 1.0 + if clutter.jitter_sigma > 0.0 { jitter.sample(&mut rng) } else { 0.0 };
            row.zip_mut_with(&ndarray::aview1(&clutter.static_template), |v, &c| *v += gain * c);
        }
    }

    if cfg.noise_sigma > 0.0 {
        let mut rng = rng_for(seed, &[2]);
        let noise = Normal::new(0.0, cfg.noise_sigma).expect("finite noise sigma");
        data.mapv_inplace(|v| v + noise.sample(&mut rng));
    }

    Ok(RadarRecord { data, scene: scene.clone(), config: cfg.clone(), seed })
}

/// Cuts a record into non-overlapping 50-frame samples labelled with the head count.
pub fn slice_samples(record: &RadarRecord) -> Result<Vec<RadarMatrix>> {
    slice_frames(&record.data, record.scene.n_people as u8)
}

pub fn slice_frames(data: &Array2<f64>, label: u8) -> Result<Vec<RadarMatrix>> {
    let frames = data.nrows();
    if frames == 0 || frames % FRAMES_PER_SAMPLE != 0 {
        return Err(domain(format!(
            "record frame count {frames} is not a positive multiple of {FRAMES_PER_SAMPLE}"
        )));
    }
    (0..frames / FRAMES_PER_SAMPLE)
        .map(|i| {
            let block = data.slice(s![i * FRAMES_PER_SAMPLE..(i + 1) * FRAMES_PER_SAMPLE, ..]);
            Ok(RadarMatrix::new(block.to_owned(), Stage::Raw)?.with_label(label))
        })
        .collect()
}

/// How many records of each head count a scenario contributes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPlan {
    pub scenario: Scenario,
    pub max_people: usize,
    pub records_per_class: usize,
    /// Records of one head count continue a single session with the same
    /// people; when false every record is an independent scene.
    pub sessions: bool,
}

impl ScenarioPlan {
    /// 40 records per class, covering every head count the scenario allows.
    pub fn default_for(scenario: Scenario) -> Self {
        Self { scenario, max_people: scenario.max_people(), records_per_class: 40, sessions: true }
    }

    pub fn classes(&self) -> usize {
        self.max_people + 1
    }

    pub fn record_count(&self) -> usize {
        self.classes() * self.records_per_class
    }

    pub fn sample_count(&self, cfg: &RadarConfig) -> usize {
        self.record_count() * (cfg.frames_per_record / FRAMES_PER_SAMPLE)
    }

    /// Record specifications in file order: class-major, then record index.
    pub fn records(&self, master_seed: u64) -> Vec<RecordSpec> {
        let mut out = Vec::with_capacity(self.record_count());
        let tag = self.scenario.tag() as u64;
        for n in 0..=self.max_people {
            for r in 0..self.records_per_class {
                let (session_seed, window) = if self.sessions {
                    (derive_seed(master_seed, &[tag, n as u64]), r)
                } else {
                    (derive_seed(master_seed, &[tag, n as u64, r as u64, 0]), 0)
                };
                out.push(RecordSpec {
                    scenario: self.scenario,
                    n_people: n,
                    session_seed,
                    window,
                    synth_seed: derive_seed(master_seed, &[tag, n as u64, r as u64, 1]),
                });
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecordSpec {
    pub scenario: Scenario,
    pub n_people: usize,
    /// Shared by every record of the session: trajectories and people.
    pub session_seed: u64,
    /// Position of the record within its session.
    pub window: usize,
    /// Noise and clutter jitter of this record.
    pub synth_seed: u64,
}

impl RecordSpec {
    pub fn generate(&self, cfg: &RadarConfig) -> Result<RadarRecord> {
        let scene = generate_session_window(self.scenario, self.n_people, self.session_seed, self.window, cfg)?;
        let start = self.window * cfg.frames_per_record;
        synthesize_session_window(&scene, cfg, self.session_seed, self.synth_seed, start)
    }
}
