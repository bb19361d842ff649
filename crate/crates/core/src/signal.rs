//! Complex baseband buffers, delayed-Doppler pilot synthesis and calibrated
//! complex white Gaussian noise.

use std::f64::consts::PI;
use std::ops::Deref;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::pilot::Pilot;

/// An immutable buffer of finite complex baseband samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexBuffer(Vec<Complex64>);

impl ComplexBuffer {
    /// Wraps `samples`, rejecting NaN or infinite components.
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        if let Some(pos) = samples.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite sample at index {pos}")));
        }
        Ok(Self(samples))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.0
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scaled(&self, gain: Complex64) -> Self {
        Self(self.0.iter().map(|z| z * gain).collect())
    }

    // Internal constructor for arithmetic results that are finite by construction.
    pub(crate) fn from_vec_unchecked(samples: Vec<Complex64>) -> Self {
        debug_assert!(samples.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        Self(samples)
    }
}

impl Deref for ComplexBuffer {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

/// Parameters of one received-signal realization on the Nyquist grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisParams {
    pub delay_samples: usize,
    pub doppler_hz: f64,
    pub amplitude: Complex64,
    pub sample_period: f64,
    pub noise_variance: f64,
    pub rng_seed: u64,
}

impl SynthesisParams {
    /// Noiseless, unit-amplitude realization.
    pub fn noiseless(delay_samples: usize, doppler_hz: f64, sample_period: f64) -> Self {
        Self {
            delay_samples,
            doppler_hz,
            amplitude: Complex64::new(1.0, 0.0),
            sample_period,
            noise_variance: 0.0,
            rng_seed: 0,
        }
    }
}

/// `exp(j 2 pi nu n T_s)` evaluated at absolute sample index `n`.
///
/// Shared by synthesis and the correlators so that on-grid hypotheses see
/// bit-identical phasors.
#[inline]
pub fn doppler_phasor(doppler_hz: f64, sample_period: f64, n: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * doppler_hz * sample_period * n as f64)
}

/// Independent random streams derived from one trial seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum RngRole {
    Parameters = 0,
    Noise = 1,
    Pilot = 2,
    Bootstrap = 3,
}

pub fn role_rng(seed: u64, role: RngRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role as u64);
    rng
}

/// Deterministically derives a child seed from `master` and a path of indices
/// (SplitMix64 finalizer folded over the path).
pub fn split_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// `n` i.i.d. circularly-symmetric complex Gaussian samples of variance
/// `variance` (half per real component).
pub fn awgn(variance: f64, n: usize, seed: u64) -> Result<ComplexBuffer> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::InvalidParameter(format!("noise variance must be >= 0, got {variance}")));
    }
    if variance == 0.0 {
        return Ok(ComplexBuffer::zeros(n));
    }
    let sigma = (variance / 2.0).sqrt();
    let mut rng = role_rng(seed, RngRole::Noise);
    let samples = (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(sigma * re, sigma * im)
        })
        .collect();
    Ok(ComplexBuffer::from_vec_unchecked(samples))
}

/// Synthesizes `r[n] = a s[n-d] exp(j 2 pi nu n T_s) + w[n]` for `n` in `[0, n_obs)`.
pub fn synthesize_received(pilot: &Pilot, p: &SynthesisParams, n_obs: usize) -> Result<ComplexBuffer> {
    let ns = pilot.len();
    if n_obs < ns + p.delay_samples {
        return Err(Error::Precondition(format!(
            "observation of {n_obs} samples cannot hold a {ns}-sample pilot at delay {}",
            p.delay_samples
        )));
    }
    if !(p.sample_period > 0.0) {
        return Err(Error::InvalidParameter(format!("sample period must be > 0, got {}", p.sample_period)));
    }
    let mut out = awgn(p.noise_variance, n_obs, p.rng_seed)?.into_vec();
    let d = p.delay_samples;
    for (k, s) in pilot.samples().iter().enumerate() {
        let n = k + d;
        out[n] += p.amplitude * s * doppler_phasor(p.doppler_hz, p.sample_period, n);
    }
    ComplexBuffer::new(out)
}

/// Noise variance giving `snr_db` relative to the mean per-sample pilot power.
///
/// `snr_db = +inf` maps to a noiseless realization.
pub fn snr_to_noise_variance(snr_db: f64, pilot: &Pilot) -> Result<f64> {
    let power = pilot.mean_power();
    if !(power > 0.0) {
        return Err(Error::InvalidParameter("pilot has zero energy".into()));
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidParameter("SNR is NaN".into()));
    }
    Ok(power / 10f64.powf(snr_db / 10.0))
}

/// Reads one `real,imag` sample per line. Blank lines and `#` comments are
/// skipped.
pub fn read_sample_file(path: &std::path::Path) -> Result<ComplexBuffer> {
    let text = std::fs::read_to_string(path)?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (re, im) = line
            .split_once(',')
            .ok_or_else(|| parse_err(i + 1, format!("expected \"real,imag\", got {line:?}")))?;
        let re: f64 = re.trim().parse().map_err(|e| parse_err(i + 1, format!("real part: {e}")))?;
        let im: f64 = im.trim().parse().map_err(|e| parse_err(i + 1, format!("imaginary part: {e}")))?;
        if !re.is_finite() || !im.is_finite() {
            return Err(parse_err(i + 1, "non-finite sample".into()));
        }
        samples.push(Complex64::new(re, im));
    }
    if samples.is_empty() {
        return Err(parse_err(0, "no samples".into()));
    }
    ComplexBuffer::new(samples)
}

pub fn write_sample_file(path: &std::path::Path, samples: &[Complex64]) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::with_capacity(samples.len() * 40);
    for z in samples {
        writeln!(out, "{},{}", z.re, z.im).expect("write to String");
    }
    std::fs::write(path, out)?;
    Ok(())
}
