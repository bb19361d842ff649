//! Known reference waveforms: NR PSS/SSS carried on OFDM symbols at the
//! 3.84 MHz / 256-point / 15 kHz numerology, and a synthetic QPSK pilot.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{role_rng, ComplexBuffer, RngRole};

/// Length of the NR PSS and SSS sequences.
pub const NR_SYNC_LEN: usize = 127;

/// OFDM numerology of the pilot grid.
///
/// `subcarrier_offset` indexes a DC-centred logical grid: logical subcarrier
/// `k` sits at frequency `(k - fft_size / 2) * subcarrier_spacing_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumerologyConfig {
    pub sampling_frequency_hz: f64,
    pub fft_size: usize,
    pub subcarrier_spacing_hz: f64,
    pub subcarrier_offset: usize,
}

impl NumerologyConfig {
    /// 3.84 MHz sampling, 256-point FFT, 15 kHz spacing, sync sequences
    /// centred on DC.
    pub fn nr_default() -> Self {
        Self {
            sampling_frequency_hz: 3.84e6,
            fft_size: 256,
            subcarrier_spacing_hz: 15e3,
            subcarrier_offset: 256 / 2 - 64,
        }
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sampling_frequency_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 {
            return Err(Error::InvalidParameter("fft_size must be >= 1".into()));
        }
        if !(self.sampling_frequency_hz > 0.0) || !(self.subcarrier_spacing_hz > 0.0) {
            return Err(Error::InvalidParameter("sampling frequency and subcarrier spacing must be > 0".into()));
        }
        let expected = self.fft_size as f64 * self.subcarrier_spacing_hz;
        if (expected - self.sampling_frequency_hz).abs() > 1e-9 * self.sampling_frequency_hz {
            return Err(Error::InvalidParameter(format!(
                "sampling frequency {} Hz != fft_size x subcarrier spacing = {expected} Hz",
                self.sampling_frequency_hz
            )));
        }
        Ok(())
    }
}

impl Default for NumerologyConfig {
    fn default() -> Self {
        Self::nr_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellIdentity {
    pub n_id1: Option<u16>,
    pub n_id2: u8,
}

/// A Nyquist-rate known reference waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Pilot {
    samples: ComplexBuffer,
    label: String,
    identity: Option<CellIdentity>,
    numerology: Option<NumerologyConfig>,
}

impl Pilot {
    /// Builds a pilot, rejecting empty or zero-energy waveforms.
    pub fn from_samples(label: impl Into<String>, samples: Vec<Complex64>) -> Result<Self> {
        let samples = ComplexBuffer::new(samples)?;
        if samples.is_empty() {
            return Err(Error::InvalidParameter("pilot must have at least one sample".into()));
        }
        if !(samples.energy() > 0.0) {
            return Err(Error::InvalidParameter("pilot energy must be > 0".into()));
        }
        Ok(Self {
            samples,
            label: label.into(),
            identity: None,
            numerology: None,
        })
    }

    #[cfg(test)]
    pub(crate) fn from_samples_unchecked(label: &str, samples: Vec<Complex64>) -> Self {
        Self {
            samples: ComplexBuffer::from_vec_unchecked(samples),
            label: label.into(),
            identity: None,
            numerology: None,
        }
    }

    pub fn with_identity(mut self, identity: CellIdentity) -> Self {
        self.identity = Some(identity);
        self
    }

    pub fn with_numerology(mut self, numerology: NumerologyConfig) -> Self {
        self.numerology = Some(numerology);
        self
    }

    pub fn samples(&self) -> &ComplexBuffer {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn identity(&self) -> Option<CellIdentity> {
        self.identity
    }

    pub fn numerology(&self) -> Option<NumerologyConfig> {
        self.numerology
    }

    pub fn energy(&self) -> f64 {
        self.samples.energy()
    }

    /// Mean per-sample power over the pilot support.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    /// Same pilot with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        let mut out = Self::from_samples(
            format!("{}*{gain}", self.label),
            self.samples.scaled(Complex64::new(gain, 0.0)).into_vec(),
        )?;
        out.identity = self.identity;
        out.numerology = self.numerology;
        Ok(out)
    }

    /// Writes the pilot as JSON (label, identity, numerology, interleaved re/im).
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = PilotFile {
            label: self.label.clone(),
            identity: self.identity,
            numerology: self.numerology,
            length: self.len(),
            samples: self.samples.iter().flat_map(|z| [z.re, z.im]).collect(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: PilotFile = serde_json::from_str(&text)?;
        if file.samples.len() != 2 * file.length {
            return Err(Error::LengthMismatch {
                expected: 2 * file.length,
                actual: file.samples.len(),
            });
        }
        let samples = file
            .samples
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        let mut pilot = Self::from_samples(file.label, samples)?;
        pilot.identity = file.identity;
        pilot.numerology = file.numerology;
        Ok(pilot)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PilotFile {
    label: String,
    identity: Option<CellIdentity>,
    numerology: Option<NumerologyConfig>,
    length: usize,
    samples: Vec<f64>,
}

/// 7-stage binary LFSR `x(i+7) = (x(i+tap) + x(i)) mod 2`, 127 outputs.
fn m_sequence(init: [u8; 7], tap: usize) -> [u8; NR_SYNC_LEN] {
    let mut x = [0u8; NR_SYNC_LEN];
    x[..7].copy_from_slice(&init);
    for i in 0..NR_SYNC_LEN - 7 {
        x[i + 7] = (x[i + tap] + x[i]) % 2;
    }
    x
}

/// NR primary synchronization sequence for `n_id2` in {0, 1, 2}, as +-1 values.
pub fn generate_pss(n_id2: u8) -> Result<Vec<f64>> {
    if n_id2 > 2 {
        return Err(Error::InvalidParameter(format!("N_ID2 must be in 0..=2, got {n_id2}")));
    }
    let x = m_sequence([0, 1, 1, 0, 1, 1, 1], 4);
    Ok((0..NR_SYNC_LEN)
        .map(|n| {
            let m = (n + 43 * n_id2 as usize) % NR_SYNC_LEN;
            1.0 - 2.0 * x[m] as f64
        })
        .collect())
}

/// NR secondary synchronization sequence for `n_id1` in 0..=335 and `n_id2`
/// in {0, 1, 2}, as +-1 values.
pub fn generate_sss(n_id1: u16, n_id2: u8) -> Result<Vec<f64>> {
    if n_id1 > 335 {
        return Err(Error::InvalidParameter(format!("N_ID1 must be in 0..=335, got {n_id1}")));
    }
    if n_id2 > 2 {
        return Err(Error::InvalidParameter(format!("N_ID2 must be in 0..=2, got {n_id2}")));
    }
    let x0 = m_sequence([1, 0, 0, 0, 0, 0, 0], 4);
    let x1 = m_sequence([1, 0, 0, 0, 0, 0, 0], 1);
    let m0 = 15 * (n_id1 as usize / 112) + 5 * n_id2 as usize;
    let m1 = n_id1 as usize % 112;
    Ok((0..NR_SYNC_LEN)
        .map(|n| {
            let a = 1.0 - 2.0 * x0[(n + m0) % NR_SYNC_LEN] as f64;
            let b = 1.0 - 2.0 * x1[(n + m1) % NR_SYNC_LEN] as f64;
            a * b
        })
        .collect())
}

fn logical_to_bin(k: usize, fft_size: usize) -> usize {
    (k + fft_size - fft_size / 2) % fft_size
}

/// Maps `freq_seq` onto logical subcarriers starting at
/// `cfg.subcarrier_offset` and returns one CP-free time-domain symbol.
///
/// The inverse transform is scaled by `1/sqrt(fft_size)`, so symbol energy
/// equals grid energy.
pub fn ofdm_modulate(freq_seq: &[Complex64], cfg: &NumerologyConfig) -> Result<ComplexBuffer> {
    let n = cfg.fft_size;
    if n == 0 {
        return Err(Error::InvalidParameter("fft_size must be >= 1".into()));
    }
    if cfg.subcarrier_offset + freq_seq.len() > n {
        return Err(Error::InvalidParameter(format!(
            "{} subcarriers from offset {} overflow a {n}-point grid",
            freq_seq.len(),
            cfg.subcarrier_offset
        )));
    }
    let mut grid = vec![Complex64::new(0.0, 0.0); n];
    for (m, &v) in freq_seq.iter().enumerate() {
        grid[logical_to_bin(cfg.subcarrier_offset + m, n)] = v;
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut grid);
    let scale = 1.0 / (n as f64).sqrt();
    grid.iter_mut().for_each(|z| *z *= scale);
    ComplexBuffer::new(grid)
}

/// Inverse of [`ofdm_modulate`]: recovers `len` subcarrier values starting at
/// `cfg.subcarrier_offset`.
pub fn ofdm_demodulate(symbol: &[Complex64], cfg: &NumerologyConfig, len: usize) -> Result<Vec<Complex64>> {
    let n = cfg.fft_size;
    if symbol.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: symbol.len(),
        });
    }
    if cfg.subcarrier_offset + len > n {
        return Err(Error::InvalidParameter("requested subcarriers overflow the grid".into()));
    }
    let mut grid = symbol.to_vec();
    FftPlanner::new().plan_fft_forward(n).process(&mut grid);
    let scale = 1.0 / (n as f64).sqrt();
    Ok((0..len)
        .map(|m| grid[logical_to_bin(cfg.subcarrier_offset + m, n)] * scale)
        .collect())
}

fn bpsk(seq: &[f64]) -> Vec<Complex64> {
    seq.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

/// SS/PBCH-style pilot: four OFDM symbols laid out as PSS, zero, SSS, zero.
pub fn build_nr_pilot(n_id1: u16, n_id2: u8, cfg: &NumerologyConfig) -> Result<Pilot> {
    cfg.validate()?;
    let pss = ofdm_modulate(&bpsk(&generate_pss(n_id2)?), cfg)?;
    let sss = ofdm_modulate(&bpsk(&generate_sss(n_id1, n_id2)?), cfg)?;
    let zero = ComplexBuffer::zeros(cfg.fft_size);
    let samples: Vec<Complex64> = [&pss, &zero, &sss, &zero]
        .iter()
        .flat_map(|sym| sym.iter().copied())
        .collect();
    Ok(Pilot::from_samples(format!("nr-ssb(n_id1={n_id1},n_id2={n_id2})"), samples)?
        .with_identity(CellIdentity {
            n_id1: Some(n_id1),
            n_id2,
        })
        .with_numerology(*cfg))
}

/// Single-symbol PSS pilot.
pub fn build_pss_pilot(n_id2: u8, cfg: &NumerologyConfig) -> Result<Pilot> {
    cfg.validate()?;
    let pss = ofdm_modulate(&bpsk(&generate_pss(n_id2)?), cfg)?;
    Ok(Pilot::from_samples(format!("nr-pss(n_id2={n_id2})"), pss.into_vec())?
        .with_identity(CellIdentity { n_id1: None, n_id2 })
        .with_numerology(*cfg))
}

/// Unit-magnitude pseudo-random QPSK pilot, deterministic in `seed`.
pub fn generate_synthetic_pilot(length: usize, seed: u64) -> Result<Pilot> {
    if length == 0 {
        return Err(Error::InvalidParameter("synthetic pilot length must be >= 1".into()));
    }
    let mut rng = role_rng(seed, RngRole::Pilot);
    let samples = (0..length)
        .map(|_| {
            let re = if rng.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            let im = if rng.random::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            Complex64::new(re, im)
        })
        .collect();
    Pilot::from_samples(format!("qpsk(len={length},seed={seed})"), samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// Aperiodic cross-correlation sum_n a[n] conj(b[n - lag]), lag may be negative.
    fn xcorr(a: &[Complex64], b: &[Complex64], lag: isize) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (n, x) in a.iter().enumerate() {
            let k = n as isize - lag;
            if k >= 0 && (k as usize) < b.len() {
                acc += x * b[k as usize].conj();
            }
        }
        acc
    }

    #[test]
    fn pss_shape_and_alphabet() {
        for id in 0..3 {
            let p = generate_pss(id).unwrap();
            assert_eq!(p.len(), 127);
            assert!(p.iter().all(|&v| v == 1.0 || v == -1.0));
            assert_eq!(dot(&p, &p), 127.0);
        }
        assert!(generate_pss(3).is_err());
    }

    #[test]
    fn pss_known_prefix() {
        // x(0..7) = 0,1,1,0,1,1,1 -> d(0..7) = 1,-1,-1,1,-1,-1,-1 for N_ID2 = 0
        let p = generate_pss(0).unwrap();
        assert_eq!(&p[..7], &[1.0, -1.0, -1.0, 1.0, -1.0, -1.0, -1.0]);
    }

    #[test]
    fn pss_distinct_ids_nearly_orthogonal() {
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let pa = generate_pss(a).unwrap();
            let pb = generate_pss(b).unwrap();
            let rho = dot(&pa, &pb).abs() / 127.0;
            assert!(rho < 0.3, "PSS({a}) vs PSS({b}): {rho}");
        }
    }

    #[test]
    fn sss_shape_and_determinism() {
        for (id1, id2) in [(0, 0), (1, 0), (335, 2), (112, 1)] {
            let s = generate_sss(id1, id2).unwrap();
            assert_eq!(s.len(), 127);
            assert!(s.iter().all(|&v| v == 1.0 || v == -1.0));
            assert_eq!(s, generate_sss(id1, id2).unwrap());
        }
        assert!(generate_sss(336, 0).is_err());
        assert!(generate_sss(0, 3).is_err());
    }

    #[test]
    fn sss_neighbours_nearly_orthogonal() {
        let a = generate_sss(0, 0).unwrap();
        let b = generate_sss(1, 0).unwrap();
        let rho = dot(&a, &b).abs() / 127.0;
        assert!(rho < 0.3, "{rho}");
    }

    #[test]
    fn ofdm_dc_only() {
        let cfg = NumerologyConfig {
            sampling_frequency_hz: 4.0,
            fft_size: 4,
            subcarrier_spacing_hz: 1.0,
            subcarrier_offset: 2, // logical subcarrier 2 is DC for a 4-point grid
        };
        let sym = ofdm_modulate(&[Complex64::new(1.0, 0.0)], &cfg).unwrap();
        for z in sym.iter() {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn ofdm_zero_grid() {
        let cfg = NumerologyConfig::nr_default();
        let sym = ofdm_modulate(&vec![Complex64::new(0.0, 0.0); 127], &cfg).unwrap();
        assert!(sym.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn ofdm_overflow_rejected() {
        let cfg = NumerologyConfig {
            subcarrier_offset: 200,
            ..NumerologyConfig::nr_default()
        };
        assert!(ofdm_modulate(&vec![Complex64::new(1.0, 0.0); 127], &cfg).is_err());
    }

    #[test]
    fn ofdm_parseval_and_roundtrip() {
        let cfg = NumerologyConfig::nr_default();
        let mut rng = role_rng(9, RngRole::Pilot);
        for _ in 0..10 {
            let grid: Vec<Complex64> = (0..127)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let sym = ofdm_modulate(&grid, &cfg).unwrap();
            let eg: f64 = grid.iter().map(|z| z.norm_sqr()).sum();
            assert!((sym.energy() - eg).abs() <= 1e-12 * eg);
            let back = ofdm_demodulate(&sym, &cfg, 127).unwrap();
            let err: f64 = back.iter().zip(&grid).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err <= 1e-12 * eg.sqrt(), "round trip error {err}");
        }
    }

    #[test]
    fn nr_pilot_layout() {
        let cfg = NumerologyConfig::nr_default();
        let p = build_nr_pilot(0, 0, &cfg).unwrap();
        assert_eq!(p.len(), 1024);
        let seg = |i: usize| p.samples()[i * 256..(i + 1) * 256].iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert_eq!(seg(1), 0.0);
        assert_eq!(seg(3), 0.0);
        assert!((seg(0) - 127.0).abs() < 1e-9);
        assert!((seg(2) - 127.0).abs() < 1e-9);
        assert_eq!(p, build_nr_pilot(0, 0, &cfg).unwrap());
        assert!(p.energy().is_finite() && p.energy() > 0.0);
    }

    #[test]
    fn pss_segment_autocorrelation_peak_dominates() {
        let cfg = NumerologyConfig::nr_default();
        let p = build_nr_pilot(0, 0, &cfg).unwrap();
        let pss = &p.samples()[..256];
        let peak = xcorr(pss, pss, 0).norm_sqr();
        let worst = (8..256isize)
            .flat_map(|l| [l, -l])
            .map(|l| xcorr(pss, pss, l).norm_sqr())
            .fold(0.0, f64::max);
        let margin_db = 10.0 * (peak / worst).log10();
        assert!(margin_db >= 6.0, "margin {margin_db} dB");
    }

    #[test]
    fn synthetic_pilot_properties() {
        let p = generate_synthetic_pilot(8, 3).unwrap();
        assert_eq!(p.len(), 8);
        assert!(p.samples().iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        assert!((xcorr(p.samples(), p.samples(), 0).re - 8.0).abs() < 1e-12);
        assert!(generate_synthetic_pilot(0, 3).is_err());
    }

    #[test]
    fn synthetic_pilots_with_different_seeds_decorrelate() {
        let n = 64;
        let a = generate_synthetic_pilot(n, 1).unwrap();
        let b = generate_synthetic_pilot(n, 2).unwrap();
        let norm = (a.energy() * b.energy()).sqrt();
        for lag in -(n as isize - 1)..n as isize {
            let rho = xcorr(a.samples(), b.samples(), lag).norm() / norm;
            assert!(rho < 0.8, "lag {lag}: {rho}");
        }
    }

    #[test]
    fn pilot_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pilot.json");
        let p = build_nr_pilot(17, 1, &NumerologyConfig::nr_default()).unwrap();
        p.save(&path).unwrap();
        assert_eq!(Pilot::load(&path).unwrap(), p);
    }

    #[test]
    fn numerology_consistency() {
        assert!(NumerologyConfig::nr_default().validate().is_ok());
        let bad = NumerologyConfig {
            fft_size: 128,
            ..NumerologyConfig::nr_default()
        };
        assert!(bad.validate().is_err());
    }
}
