//! Hybrid CTF-DBF feature extraction.
//!
//! CTF (curvelet transform features) summarise the bandpass matrix in the
//! curvelet domain: coarse mean and energy, the five largest fine
//! coefficients and the fine energy, and per-direction detail energies both
//! in the coefficient domain and after reconstruction. DBF (distance bin
//! features) chop every frame of the clutter-free matrix into fixed runs of
//! range samples and record each run's peak amplitude and energy, before and
//! after curvelet denoising, averaged over frames.
//!
//! Vector layout (layout version 1, 294 values with the default bins):
//!
//! | offset | content |
//! |---|---|
//! | 0 | coarse mean |
//! | 1 | coarse energy |
//! | 2..7 | fine top five, descending |
//! | 7 | fine energy |
//! | 8..11 | detail energy in curvelet domain: 90, 45, 135 degrees |
//! | 11..14 | detail energy of reconstruction: 90, 45, 135 degrees |
//! | 14.. | for each bin size (32, 64, 128): A_k, E_k, A_d, E_d over bins |

use ndarray::ArrayView1;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::curvelet::{self, CurveletCoeffs, CurveletConfig, Direction, NoiseLevel, PanelGroup};
use crate::error::{domain, Error, Result};
use crate::preprocess::{self, FilterConfig, RadarMatrix};

pub const CTF_LEN: usize = 14;
pub const DEFAULT_BIN_SIZES: [usize; 3] = [32, 64, 128];
pub const LAYOUT_VERSION: u16 = 1;
pub const DEFAULT_TAU: f64 = 0.01;
pub const DEFAULT_LAMBDA: f64 = 3.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CtfFeatures {
    pub coarse_mean: f64,
    pub coarse_energy: f64,
    pub fine_top5: [f64; 5],
    pub fine_energy: f64,
    /// Deg90, Deg45, Deg135.
    pub detail_energy_curvelet: [f64; 3],
    /// Deg90, Deg45, Deg135.
    pub detail_energy_recon: [f64; 3],
}

impl CtfFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(CTF_LEN);
        v.push(self.coarse_mean);
        v.push(self.coarse_energy);
        v.extend_from_slice(&self.fine_top5);
        v.push(self.fine_energy);
        v.extend_from_slice(&self.detail_energy_curvelet);
        v.extend_from_slice(&self.detail_energy_recon);
        v
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != CTF_LEN {
            return Err(Error::Shape(format!("CTF block needs {CTF_LEN} values, got {}", v.len())));
        }
        Ok(Self {
            coarse_mean: v[0],
            coarse_energy: v[1],
            fine_top5: v[2..7].try_into().expect("length checked"),
            fine_energy: v[7],
            detail_energy_curvelet: v[8..11].try_into().expect("length checked"),
            detail_energy_recon: v[11..14].try_into().expect("length checked"),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbfScale {
    pub bin_size: usize,
    /// Mean per-bin peak |amplitude| of the refined signal.
    pub ak: Vec<f64>,
    /// Mean per-bin energy of the refined signal.
    pub ek: Vec<f64>,
    /// Same as `ak` for the denoised signal.
    pub ad: Vec<f64>,
    /// Same as `ek` for the denoised signal.
    pub ed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbfFeatures {
    pub scales: Vec<DbfScale>,
}

impl DbfFeatures {
    pub fn len(&self) -> usize {
        self.scales.iter().map(|s| 4 * s.ak.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for s in &self.scales {
            for block in [&s.ak, &s.ek, &s.ad, &s.ed] {
                v.extend_from_slice(block);
            }
        }
        v
    }

    pub fn from_slice(v: &[f64], bin_sizes: &[usize], range_bins: usize) -> Result<Self> {
        if v.len() != dbf_len(bin_sizes, range_bins) {
            return Err(Error::Shape(format!(
                "DBF block needs {} values, got {}",
                dbf_len(bin_sizes, range_bins),
                v.len()
            )));
        }
        let mut offset = 0;
        let mut take = |n: usize| {
            let out = v[offset..offset + n].to_vec();
            offset += n;
            out
        };
        let scales = bin_sizes
            .iter()
            .map(|&bin_size| {
                let n = range_bins / bin_size;
                DbfScale { bin_size, ak: take(n), ek: take(n), ad: take(n), ed: take(n) }
            })
            .collect();
        Ok(Self { scales })
    }
}

pub fn dbf_len(bin_sizes: &[usize], range_bins: usize) -> usize {
    bin_sizes.iter().map(|s| 4 * (range_bins / s)).sum()
}

pub fn feature_len(bin_sizes: &[usize], range_bins: usize) -> usize {
    CTF_LEN + dbf_len(bin_sizes, range_bins)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Option<u8>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Inverse of [`assemble_hybrid`].
    pub fn split(&self, bin_sizes: &[usize], range_bins: usize) -> Result<(CtfFeatures, DbfFeatures)> {
        if self.values.len() < CTF_LEN {
            return Err(Error::Shape(format!("feature vector too short: {}", self.values.len())));
        }
        let ctf = CtfFeatures::from_slice(&self.values[..CTF_LEN])?;
        let dbf = DbfFeatures::from_slice(&self.values[CTF_LEN..], bin_sizes, range_bins)?;
        Ok((ctf, dbf))
    }
}

/// Column names matching the vector layout.
pub fn feature_names(bin_sizes: &[usize], range_bins: usize) -> Vec<String> {
    let mut names: Vec<String> = ["ctf_coarse_mean", "ctf_coarse_energy"].map(String::from).to_vec();
    names.extend((1..=5).map(|i| format!("ctf_fine_top{i}")));
    names.push("ctf_fine_energy".into());
    for prefix in ["ctf_detail", "ctf_recon"] {
        names.extend(["deg90", "deg45", "deg135"].map(|d| format!("{prefix}_{d}")));
    }
    for &s in bin_sizes {
        let n = range_bins / s;
        for kind in ["ak", "ek", "ad", "ed"] {
            names.extend((0..n).map(|i| format!("dbf_s{s}_{kind}_{i:02}")));
        }
    }
    names
}

/// Zeroes detail wedges whose energy is below `tau` times the strongest wedge's.
pub fn panel_energy_cut(c: &CurveletCoeffs, tau: f64) -> Result<CurveletCoeffs> {
    if !(0.0..1.0).contains(&tau) {
        return Err(domain(format!("tau must lie in [0, 1), got {tau}")));
    }
    let mut out = c.clone();
    let max = out.details().map(|b| b.energy()).fold(0.0, f64::max);
    let cut = tau * max;
    for b in out.details_mut() {
        if b.energy() < cut {
            b.data.fill(Complex64::new(0.0, 0.0));
        }
    }
    Ok(out)
}

pub fn extract_ctf(bandpass: &RadarMatrix, cfg: &CurveletConfig, tau: f64) -> Result<CtfFeatures> {
    let coeffs = panel_energy_cut(&curvelet::forward(bandpass, cfg)?, tau)?;

    let coarse = coeffs.coarse();
    let coarse_mean = coarse.data.iter().map(|z| z.norm()).sum::<f64>() / coarse.data.len() as f64;
    let coarse_energy = coarse.energy();

    let fine = coeffs.fine();
    let mut mags: Vec<f64> = fine.data.iter().map(|z| z.norm()).collect();
    // Stable sort keeps scan order among equal magnitudes.
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut fine_top5 = [0.0; 5];
    for (dst, src) in fine_top5.iter_mut().zip(&mags) {
        *dst = *src;
    }

    let mut detail_energy_curvelet = [0.0; 3];
    let mut detail_energy_recon = [0.0; 3];
    for (i, dir) in Direction::ALL.into_iter().enumerate() {
        let group = PanelGroup::of(dir, cfg);
        detail_energy_curvelet[i] = coeffs
            .details()
            .filter(|b| group.panel_indices.contains(&b.angle))
            .map(|b| b.energy())
            .sum();
        detail_energy_recon[i] = curvelet::reconstruct_group(&coeffs, &group)?.energy();
    }

    Ok(CtfFeatures {
        coarse_mean,
        coarse_energy,
        fine_top5,
        fine_energy: fine.energy(),
        detail_energy_curvelet,
        detail_energy_recon,
    })
}

/// Per-bin peak |amplitude| and energy of one frame.
pub fn dbf_frame(frame: ArrayView1<f64>, bin_size: usize) -> (Vec<f64>, Vec<f64>) {
    let n = frame.len() / bin_size;
    let mut peaks = vec![0.0; n];
    let mut energies = vec![0.0; n];
    for (i, &v) in frame.iter().take(n * bin_size).enumerate() {
        let b = i / bin_size;
        peaks[b] = f64::max(peaks[b], v.abs());
        energies[b] += v * v;
    }
    (peaks, energies)
}

/// Frame-averaged per-bin peaks and energies.
fn averaged_bins(m: &RadarMatrix, bin_size: usize) -> (Vec<f64>, Vec<f64>) {
    let n = m.bins() / bin_size;
    let mut peaks = vec![0.0; n];
    let mut energies = vec![0.0; n];
    for row in m.data.rows() {
        let (p, e) = dbf_frame(row, bin_size);
        peaks.iter_mut().zip(p).for_each(|(a, v)| *a += v);
        energies.iter_mut().zip(e).for_each(|(a, v)| *a += v);
    }
    let frames = m.frames() as f64;
    peaks.iter_mut().chain(energies.iter_mut()).for_each(|v| *v /= frames);
    (peaks, energies)
}

pub fn extract_dbf(refined: &RadarMatrix, denoised: &RadarMatrix, bin_sizes: &[usize]) -> Result<DbfFeatures> {
    if refined.data.dim() != denoised.data.dim() {
        return Err(Error::Shape(format!(
            "refined {:?} and denoised {:?} differ",
            refined.data.dim(),
            denoised.data.dim()
        )));
    }
    let bins = refined.bins();
    if let Some(bad) = bin_sizes.iter().find(|&&s| s == 0 || bins % s != 0) {
        return Err(domain(format!("{bins} range bins cannot be split into bins of {bad}")));
    }
    let scales = bin_sizes
        .iter()
        .map(|&bin_size| {
            let (ak, ek) = averaged_bins(refined, bin_size);
            let (ad, ed) = averaged_bins(denoised, bin_size);
            DbfScale { bin_size, ak, ek, ad, ed }
        })
        .collect();
    Ok(DbfFeatures { scales })
}

pub fn assemble_hybrid(ctf: &CtfFeatures, dbf: &DbfFeatures) -> FeatureVector {
    let mut values = ctf.to_vec();
    values.extend(dbf.to_vec());
    FeatureVector { values, label: None }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub filter: FilterConfig,
    pub curvelet: CurveletConfig,
    pub bin_sizes: Vec<usize>,
    pub tau: f64,
    pub lambda: f64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            curvelet: CurveletConfig::default(),
            bin_sizes: DEFAULT_BIN_SIZES.to_vec(),
            tau: DEFAULT_TAU,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

/// Intermediate matrices of the preprocessing chain.
#[derive(Clone, Debug)]
pub struct Stages {
    pub bandpass: RadarMatrix,
    pub refined: RadarMatrix,
    pub denoised: RadarMatrix,
}

/// DC removal, bandpass, clutter removal and curvelet denoising.
pub fn preprocess_sample(raw: &RadarMatrix, cfg: &ExtractorConfig) -> Result<Stages> {
    let bandpass = preprocess::bandpass_filter(&preprocess::remove_dc(raw), &cfg.filter)?;
    let refined = preprocess::remove_clutter(&bandpass, cfg.filter.alpha)?;
    let denoised = curvelet::hard_threshold_denoise(&refined, cfg.lambda, NoiseLevel::Auto, &cfg.curvelet)?;
    Ok(Stages { bandpass, refined, denoised })
}

/// Full hybrid feature vector of one raw sample.
pub fn extract_sample(raw: &RadarMatrix, cfg: &ExtractorConfig) -> Result<FeatureVector> {
    let stages = preprocess_sample(raw, cfg)?;
    let ctf = extract_ctf(&stages.bandpass, &cfg.curvelet, cfg.tau)?;
    let dbf = extract_dbf(&stages.refined, &stages.denoised, &cfg.bin_sizes)?;
    let mut fv = assemble_hybrid(&ctf, &dbf);
    if fv.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("feature vector has non-finite entries".into()));
    }
    fv.label = raw.label;
    Ok(fv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Stage;
    use ndarray::{Array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: (usize, usize), seed: u64) -> RadarMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array::from_shape_fn(dims, |_| rng.random_range(-1.0..1.0));
        RadarMatrix { data, stage: Stage::Refined, label: None }
    }

    #[test]
    fn default_layout_is_294_long() {
        assert_eq!(dbf_len(&DEFAULT_BIN_SIZES, 1280), 280);
        assert_eq!(feature_len(&DEFAULT_BIN_SIZES, 1280), 294);
        let names = feature_names(&DEFAULT_BIN_SIZES, 1280);
        assert_eq!(names.len(), 294);
        assert_eq!(names[0], "ctf_coarse_mean");
        assert_eq!(names[14], "dbf_s32_ak_00");
        assert_eq!(names[293], "dbf_s128_ed_09");
    }

    #[test]
    fn zero_inputs_give_zero_features() {
        let z = RadarMatrix { data: Array2::zeros((50, 1280)), stage: Stage::Bandpass, label: None };
        let ctf = extract_ctf(&z, &CurveletConfig::default(), DEFAULT_TAU).unwrap();
        assert!(ctf.to_vec().iter().all(|&v| v == 0.0));
        let dbf = extract_dbf(&z, &z, &DEFAULT_BIN_SIZES).unwrap();
        assert_eq!(dbf.len(), 280);
        assert!(dbf.to_vec().iter().all(|&v| v == 0.0));
        let fv = assemble_hybrid(&ctf, &dbf);
        assert_eq!(fv.values, vec![0.0; 294]);
    }

    #[test]
    fn single_spike_by_hand() {
        let mut data = Array2::zeros((1, 1280));
        data[[0, 10]] = 3.0;
        let m = RadarMatrix { data, stage: Stage::Refined, label: None };
        let dbf = extract_dbf(&m, &m, &[32]).unwrap();
        let s = &dbf.scales[0];
        assert_eq!(s.ak[0], 3.0);
        assert_eq!(s.ek[0], 9.0);
        assert!(s.ak[1..].iter().chain(&s.ek[1..]).all(|&v| v == 0.0));
    }

    #[test]
    fn dbf_rejects_bad_bins() {
        let m = random((2, 1280), 1);
        assert!(matches!(extract_dbf(&m, &m, &[48]), Err(Error::Domain(_))));
        let other = random((3, 1280), 1);
        assert!(matches!(extract_dbf(&m, &other, &[32]), Err(Error::Shape(_))));
    }

    #[test]
    fn per_frame_peak_energy_bound() {
        let m = random((50, 1280), 9);
        for &s in &DEFAULT_BIN_SIZES {
            for row in m.data.rows() {
                let (p, e) = dbf_frame(row, s);
                for (a, en) in p.iter().zip(&e) {
                    assert!(a * a <= en * s as f64);
                    assert!(a * a <= *en + 1e-15);
                }
            }
        }
    }

    #[test]
    fn layout_round_trip() {
        let refined = random((50, 1280), 2);
        let denoised = random((50, 1280), 3);
        let dbf = extract_dbf(&refined, &denoised, &DEFAULT_BIN_SIZES).unwrap();
        let ctf = CtfFeatures {
            coarse_mean: 1.0,
            coarse_energy: 2.0,
            fine_top5: [9.0, 8.0, 7.0, 6.0, 5.0],
            fine_energy: 3.0,
            detail_energy_curvelet: [4.0, 5.0, 6.0],
            detail_energy_recon: [7.0, 8.0, 9.0],
        };
        let fv = assemble_hybrid(&ctf, &dbf);
        assert_eq!(fv.values[0], ctf.coarse_mean);
        assert_eq!(fv.values[14], dbf.scales[0].ak[0]);
        let (c2, d2) = fv.split(&DEFAULT_BIN_SIZES, 1280).unwrap();
        assert_eq!(c2, ctf);
        assert_eq!(d2, dbf);
    }

    #[test]
    fn tau_zero_keeps_every_panel() {
        let m = random((50, 1280), 4);
        let c = curvelet::forward(&m, &CurveletConfig::default()).unwrap();
        assert_eq!(panel_energy_cut(&c, 0.0).unwrap(), c);
        assert!(panel_energy_cut(&c, 1.0).is_err());
        assert!(panel_energy_cut(&c, -0.1).is_err());
    }

    #[test]
    fn dominant_panel_survives_half_cut() {
        let m = random((50, 1280), 5);
        let mut c = curvelet::forward(&m, &CurveletConfig::default()).unwrap();
        for b in c.details_mut() {
            if b.angle == 6 {
                b.data.mapv_inplace(|z| z * 100.0);
            }
        }
        let cut = panel_energy_cut(&c, 0.5).unwrap();
        for b in cut.details() {
            assert_eq!(b.energy() > 0.0, b.angle == 6, "panel {}", b.angle);
        }
        assert_eq!(cut.coarse(), c.coarse());
        assert_eq!(cut.fine(), c.fine());
    }

    #[test]
    fn panel_cut_matches_independent_scan() {
        let cfg = ExtractorConfig::default();
        let raw = random((50, 1280), 6);
        let bp = preprocess::bandpass_filter(&raw, &cfg.filter).unwrap();
        let c = curvelet::forward(&bp, &cfg.curvelet).unwrap();
        let energies: Vec<f64> = c
            .bands
            .iter()
            .filter(|b| b.role == curvelet::BandRole::Detail)
            .map(|b| b.data.iter().map(|z| z.re * z.re + z.im * z.im).sum())
            .collect();
        let max = energies.iter().cloned().fold(f64::MIN, f64::max);
        let expected: Vec<bool> = energies.iter().map(|&e| e >= 0.01 * max).collect();
        let cut = panel_energy_cut(&c, 0.01).unwrap();
        let survived: Vec<bool> = cut.details().map(|b| b.energy() > 0.0).collect();
        assert_eq!(survived, expected);
        assert!(expected.iter().any(|s| !s), "bandpass data should leave some panels dead");
    }

    #[test]
    fn fine_top5_is_sorted_and_bounded() {
        let m = random((50, 1280), 7);
        let ctf = extract_ctf(&m, &CurveletConfig::default(), DEFAULT_TAU).unwrap();
        assert!(ctf.fine_top5.windows(2).all(|w| w[0] >= w[1]));
        let total = m.energy();
        for e in ctf.detail_energy_recon {
            assert!(e <= total * (1.0 + 1e-6));
        }
        assert!(ctf.to_vec().iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}
