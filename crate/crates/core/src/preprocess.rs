//! Signal preprocessing: DC removal, Hamming-windowed FIR bandpass and
//! running-average clutter suppression.
//!
//! Radar matrices are laid out slow time (frames) along axis 0 and fast time
//! (range bins) along axis 1.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, Error, Result};
use crate::sim::RadarConfig;

/// Smallest fast-time length accepted; equals the largest distance bin.
pub const MIN_RANGE_BINS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Raw,
    Bandpass,
    Refined,
    Denoised,
}

impl Stage {
    pub fn tag(self) -> u8 {
        match self {
            Stage::Raw => 0,
            Stage::Bandpass => 1,
            Stage::Refined => 2,
            Stage::Denoised => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Stage::Raw),
            1 => Some(Stage::Bandpass),
            2 => Some(Stage::Refined),
            3 => Some(Stage::Denoised),
            _ => None,
        }
    }
}

/// A slow-time by fast-time block of radar samples.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarMatrix {
    pub data: Array2<f64>,
    pub stage: Stage,
    pub label: Option<u8>,
}

impl RadarMatrix {
    pub fn new(data: Array2<f64>, stage: Stage) -> Result<Self> {
        let (frames, bins) = data.dim();
        if frames == 0 {
            return Err(domain("radar matrix needs at least one frame"));
        }
        if bins < MIN_RANGE_BINS {
            return Err(domain(format!(
                "radar matrix needs at least {MIN_RANGE_BINS} range bins, got {bins}"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("radar matrix contains non-finite values".into()));
        }
        Ok(Self { data, stage, label: None })
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn bins(&self) -> usize {
        self.data.ncols()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    fn derive(&self, data: Array2<f64>, stage: Stage) -> Self {
        Self { data, stage, label: self.label }
    }
}

/// Subtracts each frame's fast-time mean.
pub fn remove_dc(m: &RadarMatrix) -> RadarMatrix {
    let mut data = m.data.clone();
    for mut row in data.rows_mut() {
        let mean = row.mean().unwrap_or(0.0);
        row.mapv_inplace(|v| v - mean);
    }
    m.derive(data, m.stage)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub passband_low: f64,
    pub passband_high: f64,
    /// FIR length; must be odd so the kernel has a centre tap.
    pub taps: usize,
    /// Clutter forgetting factor.
    pub alpha: f64,
    /// Fast-time sampling rate of the range grid.
    pub sample_rate: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            passband_low: 5.65e9,
            passband_high: 7.95e9,
            taps: 129,
            alpha: 0.9,
            sample_rate: RadarConfig::default().sample_rate(),
        }
    }
}

impl FilterConfig {
    pub fn for_radar(radar: &RadarConfig) -> Self {
        Self { sample_rate: radar.sample_rate(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate / 2.0;
        if !(self.passband_low > 0.0
            && self.passband_low < self.passband_high
            && self.passband_high < nyquist)
        {
            return Err(domain(format!(
                "passband [{}, {}] Hz must satisfy 0 < low < high < Nyquist ({nyquist} Hz)",
                self.passband_low, self.passband_high
            )));
        }
        if self.taps < 3 || self.taps % 2 == 0 {
            return Err(domain(format!("taps must be odd and >= 3, got {}", self.taps)));
        }
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("clutter alpha must lie in (0, 1), got {alpha}")))
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

pub fn hamming(len: usize) -> Array1<f64> {
    if len == 1 {
        return Array1::ones(1);
    }
    let denom = (len - 1) as f64;
    Array1::from_iter((0..len).map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos()))
}

/// Hamming-windowed sinc bandpass kernel with an exact zero at DC.
pub fn bandpass_kernel(cfg: &FilterConfig) -> Result<Array1<f64>> {
    cfg.validate()?;
    let lo = cfg.passband_low / cfg.sample_rate;
    let hi = cfg.passband_high / cfg.sample_rate;
    let window = hamming(cfg.taps);
    let centre = (cfg.taps / 2) as f64;
    let mut kernel: Array1<f64> = Array1::from_iter((0..cfg.taps).map(|n| {
        let m = n as f64 - centre;
        2.0 * hi * sinc(2.0 * hi * m) - 2.0 * lo * sinc(2.0 * lo * m)
    })) * &window;
    // The truncated sinc difference leaks a little DC; remove it with a
    // scaled copy of the window, which only touches the lowest frequencies.
    let leak = kernel.sum() / window.sum();
    kernel.zip_mut_with(&window, |k, w| *k -= leak * w);
    Ok(kernel)
}

/// Magnitude of the kernel's frequency response at `freq` Hz.
pub fn kernel_response(kernel: ArrayView1<f64>, freq: f64, sample_rate: f64) -> f64 {
    let centre = (kernel.len() / 2) as f64;
    let w = 2.0 * PI * freq / sample_rate;
    let (re, im) = kernel.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &h)| {
        let phase = w * (n as f64 - centre);
        (re + h * phase.cos(), im - h * phase.sin())
    });
    re.hypot(im)
}

/// Index into a reflected (half-sample-free, "reflect" mode) extension.
fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

fn convolve_centered(row: ArrayView1<f64>, kernel: &[f64], out: &mut [f64]) {
    let len = row.len();
    let half = (kernel.len() / 2) as isize;
    let row = row.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| row.to_vec());
    for (i, o) in out.iter_mut().enumerate() {
        let base = i as isize + half;
        let mut acc = 0.0;
        let interior = base - 2 * half >= 0 && (base as usize) < len;
        if interior {
            let start = (base - 2 * half) as usize;
            for (k, &h) in kernel.iter().enumerate() {
                acc += h * row[start + kernel.len() - 1 - k];
            }
        } else {
            for (k, &h) in kernel.iter().enumerate() {
                acc += h * row[reflect_index(base - k as isize, len)];
            }
        }
        *o = acc;
    }
}

/// Zero-phase FIR bandpass of every frame.
pub fn bandpass_filter(m: &RadarMatrix, cfg: &FilterConfig) -> Result<RadarMatrix> {
    let kernel = bandpass_kernel(cfg)?;
    let kernel = kernel.to_vec();
    let mut out = Array2::zeros(m.data.dim());
    Zip::from(m.data.rows())
        .and(out.rows_mut())
        .par_for_each(|row, mut o| {
            let slice = o.as_slice_mut().expect("fresh array rows are contiguous");
            convolve_centered(row, &kernel, slice);
        });
    Ok(m.derive(out, Stage::Bandpass))
}

/// Running-average background subtraction along slow time.
///
/// `c_0 = r_0`, `c_k = alpha c_{k-1} + (1 - alpha) r_k`, output `r_k - c_k`.
pub fn remove_clutter(m: &RadarMatrix, alpha: f64) -> Result<RadarMatrix> {
    check_alpha(alpha)?;
    let mut clutter = m.data.row(0).to_owned();
    let mut out = Array2::zeros(m.data.dim());
    for (k, (frame, mut refined)) in m.data.outer_iter().zip(out.outer_iter_mut()).enumerate() {
        if k > 0 {
            Zip::from(&mut clutter)
                .and(&frame)
                .for_each(|c, &r| *c = alpha * *c + (1.0 - alpha) * r);
        }
        Zip::from(&mut refined)
            .and(&frame)
            .and(&clutter)
            .for_each(|y, &r, &c| *y = r - c);
    }
    Ok(m.derive(out, Stage::Refined))
}

/// Frame energies, handy for inspecting clutter decay.
pub fn frame_energies(m: &RadarMatrix) -> Vec<f64> {
    m.data.map_axis(Axis(1), |row| row.dot(&row)).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(frames: usize, bins: usize, seed: u64) -> RadarMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array::from_shape_fn((frames, bins), |_| rng.random_range(-1.0..1.0) + 0.3);
        RadarMatrix::new(data, Stage::Raw).unwrap()
    }

    fn raw(data: Array2<f64>) -> RadarMatrix {
        RadarMatrix { data, stage: Stage::Raw, label: None }
    }

    fn tone(freq: f64, cfg: &FilterConfig, frames: usize, bins: usize) -> RadarMatrix {
        let w = 2.0 * PI * freq / cfg.sample_rate;
        raw(Array2::from_shape_fn((frames, bins), |(_, i)| (w * i as f64).cos()))
    }

    fn rms(a: &Array2<f64>) -> f64 {
        (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn dc_removal_hand_example() {
        let m = raw(array![[1.0, 2.0, 3.0]]);
        assert_eq!(remove_dc(&m).data, array![[-1.0, 0.0, 1.0]]);
        let z = raw(Array2::zeros((4, 8)));
        assert_eq!(remove_dc(&z).data, z.data);
    }

    #[test]
    fn dc_removal_zeroes_row_means() {
        let m = random_matrix(50, 1280, 3);
        let out = remove_dc(&m);
        for row in out.data.rows() {
            assert!(row.mean().unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn matrix_rejects_bad_input() {
        assert!(RadarMatrix::new(Array2::zeros((0, 256)), Stage::Raw).is_err());
        assert!(RadarMatrix::new(Array2::zeros((2, 64)), Stage::Raw).is_err());
        let mut d = Array2::zeros((2, 256));
        d[[1, 3]] = f64::NAN;
        assert!(RadarMatrix::new(d, Stage::Raw).is_err());
    }

    #[test]
    fn kernel_response_matches_band_edges() {
        let cfg = FilterConfig::default();
        let k = bandpass_kernel(&cfg).unwrap();
        let at = |f: f64| 20.0 * kernel_response(k.view(), f, cfg.sample_rate).log10();
        assert!(at(6.8e9).abs() < 1.0, "centre gain {} dB", at(6.8e9));
        assert!(at(3.0e9) < -30.0, "3 GHz gain {} dB", at(3.0e9));
        assert!(k.sum().abs() < 1e-12);
    }

    #[test]
    fn bandpass_rejects_dc() {
        let cfg = FilterConfig::default();
        let m = raw(Array2::from_elem((3, 1280), 2.5));
        let out = bandpass_filter(&m, &cfg).unwrap();
        let max = out.data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max < 1e-3 * 2.5, "max residual {max}");
        assert_eq!(out.stage, Stage::Bandpass);
    }

    #[test]
    fn bandpass_passes_centre_tone_and_stops_3ghz() {
        let cfg = FilterConfig::default();
        let pass = tone(6.8e9, &cfg, 2, 1280);
        let out = bandpass_filter(&pass, &cfg).unwrap();
        let gain_db = 20.0 * (rms(&out.data) / rms(&pass.data)).log10();
        assert!(gain_db.abs() <= 1.0, "passband gain {gain_db} dB");

        let stop = tone(3.0e9, &cfg, 2, 1280);
        let out = bandpass_filter(&stop, &cfg).unwrap();
        let gain_db = 20.0 * (rms(&out.data) / rms(&stop.data)).log10();
        assert!(gain_db <= -30.0, "stopband gain {gain_db} dB");
    }

    #[test]
    fn bandpass_rejects_passband_beyond_nyquist() {
        let cfg = FilterConfig { passband_high: 30e9, ..FilterConfig::default() };
        let m = random_matrix(2, 256, 1);
        assert!(matches!(bandpass_filter(&m, &cfg), Err(Error::Domain(_))));
        let cfg = FilterConfig { taps: 128, ..FilterConfig::default() };
        assert!(bandpass_filter(&m, &cfg).is_err());
    }

    #[test]
    fn dc_and_bandpass_are_linear() {
        let cfg = FilterConfig::default();
        let x = random_matrix(4, 512, 10);
        let y = random_matrix(4, 512, 11);
        let (a, b) = (1.7, -0.4);
        let combo = raw(&x.data * a + &y.data * b);
        let lhs = bandpass_filter(&remove_dc(&combo), &cfg).unwrap().data;
        let rhs = bandpass_filter(&remove_dc(&x), &cfg).unwrap().data * a
            + bandpass_filter(&remove_dc(&y), &cfg).unwrap().data * b;
        let err = (&lhs - &rhs).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-12, "linearity error {err}");
    }

    #[test]
    fn reflection_indices() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect_index(i, 5)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }

    #[test]
    fn clutter_removal_of_constant_frames_decays_geometrically() {
        let alpha = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frame: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = Array2::from_shape_fn((50, 256), |(_, i)| frame[i]);
        let m = RadarMatrix { data, stage: Stage::Bandpass, label: None };
        let out = remove_clutter(&m, alpha).unwrap();
        let input_energy: f64 = frame.iter().map(|v| v * v).sum();
        let energies = frame_energies(&out);
        // For constant input the recursion gives y_k = 0 exactly at every k
        // because c_0 already equals the frame.
        for e in &energies {
            assert!(*e <= input_energy * 1e-20);
        }
        assert!(energies[49] < 0.01 * input_energy);
        assert_eq!(out.stage, Stage::Refined);
    }

    #[test]
    fn clutter_removal_step_response_is_geometric() {
        // Zero first frame, then a constant frame: y_k = alpha^k r for k >= 1.
        let alpha = 0.9;
        let mut data = Array2::from_elem((50, 128), 1.0);
        data.row_mut(0).fill(0.0);
        let m = RadarMatrix { data, stage: Stage::Bandpass, label: None };
        let out = remove_clutter(&m, alpha).unwrap();
        let e = frame_energies(&out);
        for k in 1..50 {
            let expected = 128.0 * alpha.powi(2 * k as i32);
            assert!((e[k] - expected).abs() <= 1e-9 * expected.max(1e-300));
        }
        for k in 2..50 {
            assert!((e[k] / e[k - 1] - alpha * alpha).abs() < 1e-9);
        }
        assert!(e[49] < 0.01 * 128.0);
    }

    #[test]
    fn clutter_removal_validates_alpha() {
        let m = random_matrix(3, 128, 2);
        for bad in [0.0, 1.0, -0.5, 1.5] {
            assert!(matches!(remove_clutter(&m, bad), Err(Error::Domain(_))));
        }
        let z = raw(Array2::zeros((5, 128)));
        assert!(remove_clutter(&z, 0.9).unwrap().data.iter().all(|v| *v == 0.0));
    }
}
