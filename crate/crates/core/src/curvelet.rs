//! Discrete curvelet transform via wedge wrapping.
//!
//! The 2-D spectrum is split by a smooth partition of unity: a coarse
//! low-pass window, one or more detail annuli cut into angular wedges, and a
//! non-directional fine high-pass band. The squared windows sum to one at
//! every frequency, so after each windowed piece is wrapped onto a rectangle
//! that holds its support without collisions and brought back to space with a
//! unitary inverse FFT, the coefficients form a Parseval frame: coefficient
//! energy equals image energy and the adjoint is an exact inverse.
//!
//! Frequencies are normalised per axis so that Nyquist is 1 on both axes; the
//! annuli are concentric squares in these coordinates. A detail wedge is
//! labelled by the orientation of the image structures it captures, measured
//! in degrees from the fast-time axis toward increasing frame index. Static
//! reflectors (vertical streaks) have orientation 90; a target whose range
//! grows over slow time leans toward 45.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::f64::consts::FRAC_PI_2;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{domain, Error, Result};
use crate::preprocess::{RadarMatrix, Stage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FinestKind {
    /// Single non-directional high-pass band.
    Wavelet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CurveletConfig {
    pub n_scales: usize,
    pub n_angles_detail: usize,
    pub finest: FinestKind,
}

impl Default for CurveletConfig {
    fn default() -> Self {
        Self { n_scales: 3, n_angles_detail: 16, finest: FinestKind::Wavelet }
    }
}

impl CurveletConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_scales < 2 {
            return Err(domain(format!("n_scales must be >= 2, got {}", self.n_scales)));
        }
        if self.n_angles_detail < 4 || self.n_angles_detail % 4 != 0 {
            return Err(domain(format!(
                "n_angles_detail must be a positive multiple of 4, got {}",
                self.n_angles_detail
            )));
        }
        Ok(())
    }

    /// Smallest side length the scale layout can resolve.
    pub fn min_side(&self) -> usize {
        1 << (self.n_scales + 2)
    }

    pub fn detail_scales(&self) -> std::ops::Range<usize> {
        1..self.n_scales - 1
    }

    pub fn fine_scale(&self) -> usize {
        self.n_scales - 1
    }

    /// Angular width of one wedge, degrees.
    pub fn wedge_width(&self) -> f64 {
        360.0 / self.n_angles_detail as f64
    }

    /// Orientation of wedge `angle`'s centre in degrees, in `[0, 360)`.
    ///
    /// Wedges run clockwise (decreasing orientation) starting just below 45.
    pub fn wedge_orientation(&self, angle: usize) -> f64 {
        let w = self.wedge_width();
        (45.0 - w / 2.0 - w * angle as f64).rem_euclid(360.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BandRole {
    Coarse,
    Detail,
    Fine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub scale: usize,
    /// Wedge index at detail scales, 0 otherwise.
    pub angle: usize,
    pub role: BandRole,
    pub data: Array2<Complex64>,
}

impl Band {
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub scale: usize,
    pub angle: usize,
    pub role: BandRole,
    pub rows: usize,
    pub cols: usize,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveletCoeffs {
    /// Coarse band first, then detail wedges scale by scale, fine band last.
    pub bands: Vec<Band>,
    pub source_dims: (usize, usize),
    pub config: CurveletConfig,
    pub source_stage: Stage,
    pub label: Option<u8>,
}

impl CurveletCoeffs {
    pub fn band(&self, scale: usize, angle: usize) -> Option<&Band> {
        self.bands.iter().find(|b| b.scale == scale && b.angle == angle)
    }

    pub fn coarse(&self) -> &Band {
        &self.bands[0]
    }

    pub fn fine(&self) -> &Band {
        self.bands.last().expect("transform always has a fine band")
    }

    pub fn details(&self) -> impl Iterator<Item = &Band> {
        self.bands.iter().filter(|b| b.role == BandRole::Detail)
    }

    pub fn details_mut(&mut self) -> impl Iterator<Item = &mut Band> {
        self.bands.iter_mut().filter(|b| b.role == BandRole::Detail)
    }

    pub fn energy(&self) -> f64 {
        self.bands.iter().map(Band::energy).sum()
    }

    pub fn summary(&self) -> Vec<BandSummary> {
        self.bands
            .iter()
            .map(|b| BandSummary {
                scale: b.scale,
                angle: b.angle,
                role: b.role,
                rows: b.data.nrows(),
                cols: b.data.ncols(),
                energy: b.energy(),
            })
            .collect()
    }

    /// Band shapes and energies as JSON, for inspection.
    pub fn debug_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("band summary serialises")
    }

    /// Real inner product `Re <self, other>` over all coefficients.
    pub fn inner(&self, other: &CurveletCoeffs) -> f64 {
        self.bands
            .iter()
            .zip(&other.bands)
            .map(|(a, b)| a.data.iter().zip(b.data.iter()).map(|(x, y)| (x * y.conj()).re).sum::<f64>())
            .sum()
    }

    pub fn zeroed(&self) -> Self {
        let mut out = self.clone();
        for b in out.bands.iter_mut() {
            b.data.fill(Complex64::new(0.0, 0.0));
        }
        out
    }
}

/// Unitary 2-D FFT on row-major buffers.
struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(planner: &mut FftPlanner<f64>, rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(data.len(), self.rows * self.cols);
        let (row, col) = if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        row.process(data);
        let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
        transpose(data, &mut t, self.rows, self.cols);
        col.process(&mut t);
        transpose(&t, data, self.cols, self.rows);
        let scale = 1.0 / ((self.rows * self.cols) as f64).sqrt();
        data.iter_mut().for_each(|v| *v *= scale);
    }

    fn forward(&self, data: &mut [Complex64]) {
        self.run(data, false)
    }

    fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, true)
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const BLOCK: usize = 32;
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Smooth step on `[0, 1]` with `nu(x) + nu(1 - x) = 1`.
fn meyer_nu(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x.powi(3))
}

/// Complementary pair `(lo, hi)` with `lo^2 + hi^2 = 1`, switching over `t` in `[0, 1]`.
fn transition(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (1.0, 0.0)
    } else if t >= 1.0 {
        (0.0, 1.0)
    } else {
        let a = FRAC_PI_2 * meyer_nu(t);
        (a.cos(), a.sin())
    }
}

/// Fraction of a wedge width over which neighbouring wedges cross-fade.
const ANGULAR_OVERLAP: f64 = 0.25;

/// Transition band `[start, end]` of the low-pass separating scale `j` from `j + 1`.
fn scale_boundary(j: usize, n_scales: usize) -> (f64, f64) {
    if j + 2 == n_scales {
        (0.5, 0.75)
    } else {
        let start = 0.5f64.powi((n_scales - j) as i32);
        (start, 2.0 * start)
    }
}

fn lowpass(r: f64, (a, b): (f64, f64)) -> f64 {
    transition((r - a) / (b - a)).0
}

/// Squared-sum-to-one radial windows, one per scale.
fn scale_windows(r: f64, n_scales: usize) -> Vec<f64> {
    let lows: Vec<f64> = (0..n_scales - 1).map(|j| lowpass(r, scale_boundary(j, n_scales))).collect();
    let mut out = Vec::with_capacity(n_scales);
    out.push(lows[0]);
    for j in 1..n_scales - 1 {
        out.push((lows[j] * lows[j] - lows[j - 1] * lows[j - 1]).max(0.0).sqrt());
    }
    out.push((1.0 - lows[n_scales - 2] * lows[n_scales - 2]).max(0.0).sqrt());
    out
}

/// Non-zero angular weights `(wedge, weight)` at image orientation `phi` degrees.
fn angular_windows(phi: f64, n_angles: usize) -> [(usize, f64); 2] {
    let w = 360.0 / n_angles as f64;
    let n = n_angles as f64;
    let s = ((45.0 - phi) / w).rem_euclid(n);
    let nearest = s.round();
    if (s - nearest).abs() < ANGULAR_OVERLAP {
        let t = (s - nearest + ANGULAR_OVERLAP) / (2.0 * ANGULAR_OVERLAP);
        let (lo, hi) = transition(t);
        let right = (nearest as usize) % n_angles;
        let left = (right + n_angles - 1) % n_angles;
        [(left, lo), (right, hi)]
    } else {
        [((s.floor() as usize) % n_angles, 1.0), (0, 0.0)]
    }
}

fn centred(i: usize, n: usize) -> isize {
    if i < n.div_ceil(2) {
        i as isize
    } else {
        i as isize - n as isize
    }
}

struct SupportPoint {
    grid: u32,
    wrapped: u32,
    weight: f64,
}

struct BandPlan {
    scale: usize,
    angle: usize,
    role: BandRole,
    rect: (usize, usize),
    support: Vec<SupportPoint>,
    noise_gain: f64,
    fft: Fft2,
}

/// Precomputed windows and wrapping maps for one image size.
pub struct CurveletPlan {
    dims: (usize, usize),
    config: CurveletConfig,
    bands: Vec<BandPlan>,
    fft: Fft2,
}

impl std::fmt::Debug for CurveletPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CurveletPlan")
            .field("dims", &self.dims)
            .field("config", &self.config)
            .field("bands", &self.bands.len())
            .finish()
    }
}

/// Chooses a rectangle that holds `points` (centred coordinates) without
/// aliasing: either axis may be wrapped down to its largest per-line span.
fn wrap_rect(points: &[(isize, isize)], dims: (usize, usize)) -> (usize, usize) {
    let span = |it: &mut dyn Iterator<Item = isize>| {
        let (lo, hi) = it.fold((isize::MAX, isize::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
        (hi - lo + 1) as usize
    };
    let ext0 = span(&mut points.iter().map(|p| p.0));
    let ext1 = span(&mut points.iter().map(|p| p.1));
    let mut rows: HashMap<isize, (isize, isize)> = HashMap::new();
    let mut cols: HashMap<isize, (isize, isize)> = HashMap::new();
    for &(a, b) in points {
        let r = rows.entry(a).or_insert((b, b));
        *r = (r.0.min(b), r.1.max(b));
        let c = cols.entry(b).or_insert((a, a));
        *c = (c.0.min(a), c.1.max(a));
    }
    let row_span = rows.values().map(|(lo, hi)| (hi - lo + 1) as usize).max().unwrap_or(1);
    let col_span = cols.values().map(|(lo, hi)| (hi - lo + 1) as usize).max().unwrap_or(1);
    let a = (ext0.min(dims.0), row_span.min(dims.1));
    let b = (col_span.min(dims.0), ext1.min(dims.1));
    if a.0 * a.1 <= b.0 * b.1 {
        a
    } else {
        b
    }
}

impl CurveletPlan {
    pub fn new(dims: (usize, usize), config: CurveletConfig) -> Result<Self> {
        config.validate()?;
        let (n0, n1) = dims;
        if n0.min(n1) < config.min_side() {
            return Err(domain(format!(
                "{n0}x{n1} is too small for {} scales (need at least {}x{})",
                config.n_scales,
                config.min_side(),
                config.min_side()
            )));
        }
        let n_scales = config.n_scales;
        let n_angles = config.n_angles_detail;
        let detail_count = n_scales - 2;
        // Band order: coarse, details (scale-major), fine.
        let n_bands = 2 + detail_count * n_angles;
        let mut points: Vec<Vec<(u32, (isize, isize), f64)>> = vec![Vec::new(); n_bands];
        for i0 in 0..n0 {
            let c0 = centred(i0, n0);
            let u = c0 as f64 / (n0 as f64 / 2.0);
            for i1 in 0..n1 {
                let c1 = centred(i1, n1);
                let v = c1 as f64 / (n1 as f64 / 2.0);
                let grid = (i0 * n1 + i1) as u32;
                let radial = scale_windows(u.abs().max(v.abs()), n_scales);
                if radial[0] > 0.0 {
                    points[0].push((grid, (c0, c1), radial[0]));
                }
                if radial[n_scales - 1] > 0.0 {
                    points[n_bands - 1].push((grid, (c0, c1), radial[n_scales - 1]));
                }
                if radial[1..n_scales - 1].iter().any(|&w| w > 0.0) {
                    let phi = u.atan2(v).to_degrees() + 90.0;
                    let angular = angular_windows(phi, n_angles);
                    for (d, &rw) in radial[1..n_scales - 1].iter().enumerate() {
                        if rw == 0.0 {
                            continue;
                        }
                        for &(l, aw) in &angular {
                            if aw > 0.0 {
                                points[1 + d * n_angles + l].push((grid, (c0, c1), rw * aw));
                            }
                        }
                    }
                }
            }
        }

        let mut planner = FftPlanner::new();
        let bands = points
            .into_iter()
            .enumerate()
            .map(|(b, pts)| {
                let (scale, angle, role) = if b == 0 {
                    (0, 0, BandRole::Coarse)
                } else if b == n_bands - 1 {
                    (n_scales - 1, 0, BandRole::Fine)
                } else {
                    (1 + (b - 1) / n_angles, (b - 1) % n_angles, BandRole::Detail)
                };
                let coords: Vec<(isize, isize)> = pts.iter().map(|p| p.1).collect();
                let rect = if coords.is_empty() { (1, 1) } else { wrap_rect(&coords, dims) };
                let support: Vec<SupportPoint> = pts
                    .iter()
                    .map(|&(grid, (c0, c1), weight)| {
                        let w0 = c0.rem_euclid(rect.0 as isize) as usize;
                        let w1 = c1.rem_euclid(rect.1 as isize) as usize;
                        SupportPoint { grid, wrapped: (w0 * rect.1 + w1) as u32, weight }
                    })
                    .collect();
                let weight_sq: f64 = support.iter().map(|p| p.weight * p.weight).sum();
                let noise_gain = (weight_sq / (rect.0 * rect.1) as f64).sqrt();
                BandPlan { scale, angle, role, rect, support, noise_gain, fft: Fft2::new(&mut planner, rect.0, rect.1) }
            })
            .collect();
        let fft = Fft2::new(&mut planner, n0, n1);
        Ok(Self { dims, config, bands, fft })
    }

    /// Shared plan for `(dims, config)`, built once per process.
    pub fn cached(dims: (usize, usize), config: CurveletConfig) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<((usize, usize), CurveletConfig), Arc<CurveletPlan>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(plan) = guard.get(&(dims, config)) {
            return Ok(Arc::clone(plan));
        }
        let plan = Arc::new(Self::new(dims, config)?);
        guard.insert((dims, config), Arc::clone(&plan));
        Ok(plan)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn config(&self) -> CurveletConfig {
        self.config
    }

    /// RMS coefficient magnitude of each band for unit-variance white noise,
    /// in band order.
    pub fn noise_gains(&self) -> Vec<f64> {
        self.bands.iter().map(|b| b.noise_gain).collect()
    }

    /// Sum of squared window weights at every grid frequency (should be 1).
    pub fn window_power(&self) -> Array2<f64> {
        let mut out = Array2::zeros(self.dims);
        let flat = out.as_slice_mut().expect("fresh array");
        for b in &self.bands {
            for p in &b.support {
                flat[p.grid as usize] += p.weight * p.weight;
            }
        }
        out
    }

    fn spectrum(&self, image: &Array2<f64>) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = image.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        buf
    }

    pub fn forward_array(&self, image: &Array2<f64>) -> Result<Vec<Band>> {
        if image.dim() != self.dims {
            return Err(Error::Shape(format!("plan is for {:?}, image is {:?}", self.dims, image.dim())));
        }
        let spectrum = self.spectrum(image);
        Ok(self
            .bands
            .par_iter()
            .map(|b| {
                let mut buf = vec![Complex64::new(0.0, 0.0); b.rect.0 * b.rect.1];
                for p in &b.support {
                    buf[p.wrapped as usize] += spectrum[p.grid as usize] * p.weight;
                }
                b.fft.inverse(&mut buf);
                Band {
                    scale: b.scale,
                    angle: b.angle,
                    role: b.role,
                    data: Array2::from_shape_vec(b.rect, buf).expect("rect matches buffer"),
                }
            })
            .collect())
    }

    /// Adjoint (and inverse) of [`Self::forward_array`]; returns the real part.
    pub fn inverse_array(&self, bands: &[Band]) -> Result<Array2<f64>> {
        if bands.len() != self.bands.len() {
            return Err(Error::Shape(format!("expected {} bands, got {}", self.bands.len(), bands.len())));
        }
        for (b, p) in bands.iter().zip(&self.bands) {
            if b.data.dim() != p.rect || b.scale != p.scale || b.angle != p.angle {
                return Err(Error::Shape(format!(
                    "band ({}, {}) has shape {:?}, expected ({}, {}) with shape {:?}",
                    b.scale,
                    b.angle,
                    b.data.dim(),
                    p.scale,
                    p.angle,
                    p.rect
                )));
            }
        }
        let contributions: Vec<Option<Vec<Complex64>>> = bands
            .par_iter()
            .zip(self.bands.par_iter())
            .map(|(b, p)| {
                if b.data.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
                    return None;
                }
                let mut buf: Vec<Complex64> = b.data.iter().copied().collect();
                p.fft.forward(&mut buf);
                Some(p.support.iter().map(|s| buf[s.wrapped as usize] * s.weight).collect())
            })
            .collect();
        let mut spectrum = vec![Complex64::new(0.0, 0.0); self.dims.0 * self.dims.1];
        for (contrib, p) in contributions.iter().zip(&self.bands) {
            if let Some(values) = contrib {
                for (s, v) in p.support.iter().zip(values) {
                    spectrum[s.grid as usize] += v;
                }
            }
        }
        self.fft.inverse(&mut spectrum);
        Ok(Array2::from_shape_vec(self.dims, spectrum.iter().map(|c| c.re).collect())
            .expect("dims match buffer"))
    }
}

pub fn forward(m: &RadarMatrix, cfg: &CurveletConfig) -> Result<CurveletCoeffs> {
    if m.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("transform input is not finite".into()));
    }
    let plan = CurveletPlan::cached(m.data.dim(), *cfg)?;
    Ok(CurveletCoeffs {
        bands: plan.forward_array(&m.data)?,
        source_dims: m.data.dim(),
        config: *cfg,
        source_stage: m.stage,
        label: m.label,
    })
}

pub fn inverse(c: &CurveletCoeffs) -> Result<RadarMatrix> {
    let plan = CurveletPlan::cached(c.source_dims, c.config)?;
    let data = plan.inverse_array(&c.bands)?;
    Ok(RadarMatrix { data, stage: c.source_stage, label: c.label })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Deg90,
    Deg45,
    Deg135,
}

impl Direction {
    /// Feature order: vertical first, then the two diagonals.
    pub const ALL: [Direction; 3] = [Direction::Deg90, Direction::Deg45, Direction::Deg135];

    pub fn degrees(self) -> f64 {
        match self {
            Direction::Deg45 => 45.0,
            Direction::Deg90 => 90.0,
            Direction::Deg135 => 135.0,
        }
    }
}

/// Detail wedges selected for a directional reconstruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PanelGroup {
    pub kind: Option<Direction>,
    pub panel_indices: BTreeSet<usize>,
}

impl PanelGroup {
    /// Wedges whose centre orientation lies within 22.5 degrees of `dir`
    /// (modulo 180).
    pub fn of(dir: Direction, cfg: &CurveletConfig) -> Self {
        let panel_indices = (0..cfg.n_angles_detail)
            .filter(|&l| {
                let d = (cfg.wedge_orientation(l) - dir.degrees()).rem_euclid(180.0);
                d.min(180.0 - d) < 22.5
            })
            .collect();
        Self { kind: Some(dir), panel_indices }
    }

    pub fn custom(indices: impl IntoIterator<Item = usize>) -> Self {
        Self { kind: None, panel_indices: indices.into_iter().collect() }
    }

    pub fn all(cfg: &CurveletConfig) -> Self {
        Self::custom(0..cfg.n_angles_detail)
    }

    /// One-based panel numbers, clockwise.
    pub fn panel_numbers(&self) -> Vec<usize> {
        self.panel_indices.iter().map(|l| l + 1).collect()
    }
}

/// Keeps only the detail wedges of `g` (at every detail scale).
pub fn select_group(c: &CurveletCoeffs, g: &PanelGroup) -> Result<CurveletCoeffs> {
    if let Some(bad) = g.panel_indices.iter().find(|&&l| l >= c.config.n_angles_detail) {
        return Err(domain(format!(
            "panel index {bad} out of range for {} detail wedges",
            c.config.n_angles_detail
        )));
    }
    let mut out = c.clone();
    for b in out.bands.iter_mut() {
        if !(b.role == BandRole::Detail && g.panel_indices.contains(&b.angle)) {
            b.data.fill(Complex64::new(0.0, 0.0));
        }
    }
    Ok(out)
}

/// Image-domain component carried by the wedges of `g`.
pub fn reconstruct_group(c: &CurveletCoeffs, g: &PanelGroup) -> Result<RadarMatrix> {
    inverse(&select_group(c, g)?)
}

/// Image-domain component of the bands with `role` only.
pub fn reconstruct_role(c: &CurveletCoeffs, role: BandRole) -> Result<RadarMatrix> {
    let mut out = c.clone();
    for b in out.bands.iter_mut().filter(|b| b.role != role) {
        b.data.fill(Complex64::new(0.0, 0.0));
    }
    inverse(&out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NoiseLevel {
    /// Known input noise standard deviation.
    Fixed(f64),
    /// Estimated from the fine band.
    Auto,
}

/// Median-absolute-deviation estimate of the input noise standard deviation
/// from the fine band, rescaled by that band's white-noise gain.
pub fn estimate_noise_sigma(c: &CurveletCoeffs) -> Result<f64> {
    let plan = CurveletPlan::cached(c.source_dims, c.config)?;
    let gain = *plan.noise_gains().last().expect("fine band exists");
    let mut mags: Vec<f64> = c.fine().data.iter().map(|z| z.norm()).collect();
    if mags.is_empty() || gain == 0.0 {
        return Ok(0.0);
    }
    let mid = mags.len() / 2;
    let (_, median, _) = mags.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    Ok(*median / 0.6745 / gain)
}

/// Zeroes every non-coarse coefficient with `|c| < lambda * sigma * gain_band`.
pub fn threshold_coeffs(c: &mut CurveletCoeffs, lambda: f64, sigma: f64) -> Result<()> {
    if !(lambda > 0.0) {
        return Err(domain(format!("threshold lambda must be positive, got {lambda}")));
    }
    let plan = CurveletPlan::cached(c.source_dims, c.config)?;
    for (b, gain) in c.bands.iter_mut().zip(plan.noise_gains()) {
        if b.role == BandRole::Coarse {
            continue;
        }
        let cut = lambda * sigma * gain;
        b.data.mapv_inplace(|z| if z.norm() < cut { Complex64::new(0.0, 0.0) } else { z });
    }
    Ok(())
}

/// Curvelet hard-threshold denoising; the coarse band is left untouched.
pub fn hard_threshold_denoise(
    m: &RadarMatrix,
    lambda: f64,
    sigma: NoiseLevel,
    cfg: &CurveletConfig,
) -> Result<RadarMatrix> {
    if !(lambda > 0.0) {
        return Err(domain(format!("threshold lambda must be positive, got {lambda}")));
    }
    let mut c = forward(m, cfg)?;
    let sigma = match sigma {
        NoiseLevel::Fixed(s) if s >= 0.0 => s,
        NoiseLevel::Fixed(s) => return Err(domain(format!("noise sigma must be >= 0, got {s}"))),
        NoiseLevel::Auto => estimate_noise_sigma(&c)?,
    };
    threshold_coeffs(&mut c, lambda, sigma)?;
    let mut out = inverse(&c)?;
    out.stage = Stage::Denoised;
    Ok(out)
}

/// Relative L2 distance `||a - b|| / ||b||`.
pub fn relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    Zip::from(a).and(b).for_each(|x, y| {
        num += (x - y) * (x - y);
        den += y * y;
    });
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}
