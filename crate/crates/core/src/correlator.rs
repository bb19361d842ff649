//! Full-rate and reduced delay-Doppler correlators, the normalized GLRT
//! surface, peak extraction and joint search over a pilot family.
//!
//! Every surface cell is accumulated sequentially in increasing sample
//! index, so parallel evaluation is bit-identical to sequential evaluation
//! and the all-ones mask reproduces [`full_correlate`] exactly.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::multicoset::SamplingMask;
use crate::pilot::Pilot;
use crate::signal::doppler_phasor;

/// Ratio between bin width and observation time allowing at most ~3 dB
/// scalloping loss between bins.
pub const DOPPLER_BIN_FACTOR: f64 = 0.443;

/// Doppler hypotheses, symmetric about and always containing 0 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerGrid {
    bins: Vec<f64>,
    bin_width: f64,
}

impl DopplerGrid {
    /// Grid `{k * width : |k * width| <= max_hz}`.
    pub fn symmetric(max_hz: f64, bin_width: f64) -> Result<Self> {
        if !(max_hz > 0.0) || !(bin_width > 0.0) || !max_hz.is_finite() || !bin_width.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Doppler span and bin width must be > 0, got {max_hz} and {bin_width}"
            )));
        }
        let steps = (max_hz / bin_width * (1.0 + 1e-12)).floor() as i64;
        let bins = (-steps..=steps)
            .map(|k| {
                let v = k.unsigned_abs() as f64 * bin_width;
                if k < 0 {
                    -v
                } else {
                    v
                }
            })
            .collect();
        Ok(Self { bins, bin_width })
    }

    /// A single 0 Hz hypothesis; `bin_width` is kept for reporting only.
    pub fn zero_only(bin_width: f64) -> Self {
        Self {
            bins: vec![0.0],
            bin_width,
        }
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn zero_bin(&self) -> usize {
        self.bins.len() / 2
    }

    /// Index of the bin closest to `hz`; ties go to the lower bin.
    pub fn nearest_bin(&self, hz: f64) -> usize {
        let mut best = 0;
        for (i, &b) in self.bins.iter().enumerate() {
            if (b - hz).abs() < (self.bins[best] - hz).abs() {
                best = i;
            }
        }
        best
    }
}

/// Doppler grid with bin width `0.443 / t_obs` over `[-max_hz, +max_hz]`.
pub fn make_doppler_grid(max_hz: f64, t_obs: f64) -> Result<DopplerGrid> {
    if !(t_obs > 0.0) {
        return Err(Error::InvalidParameter(format!("observation time must be > 0, got {t_obs}")));
    }
    DopplerGrid::symmetric(max_hz, DOPPLER_BIN_FACTOR / t_obs)
}

/// Delay hypotheses `0..=max_delay` crossed with a Doppler grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    pub max_delay: usize,
    pub doppler: DopplerGrid,
    pub sample_period: f64,
}

impl SearchGrid {
    pub fn new(max_delay: usize, doppler: DopplerGrid, sample_period: f64) -> Result<Self> {
        if !(sample_period > 0.0) {
            return Err(Error::InvalidParameter("sample period must be > 0".into()));
        }
        Ok(Self {
            max_delay,
            doppler,
            sample_period,
        })
    }

    pub fn n_delays(&self) -> usize {
        self.max_delay + 1
    }

    pub fn n_bins(&self) -> usize {
        self.doppler.len()
    }

    /// Minimum observation length for a pilot of `pilot_len` samples.
    pub fn min_observation(&self, pilot_len: usize) -> usize {
        pilot_len + self.max_delay
    }
}

/// Normalized metric over the delay-Doppler grid plus per-delay retained
/// pilot energies.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionSurface {
    n_delays: usize,
    dopplers: Vec<f64>,
    metric: Vec<f64>,
    energies: Vec<f64>,
    valid: Vec<bool>,
    correlations: Option<Vec<Complex64>>,
    mac_count: u64,
}

impl AcquisitionSurface {
    /// Builds a surface from raw values; delays with zero energy are marked
    /// invalid.
    pub fn from_parts(dopplers: Vec<f64>, metric: Vec<f64>, energies: Vec<f64>) -> Result<Self> {
        let n_delays = energies.len();
        if metric.len() != n_delays * dopplers.len() {
            return Err(Error::LengthMismatch {
                expected: n_delays * dopplers.len(),
                actual: metric.len(),
            });
        }
        let valid = energies.iter().map(|&e| e > 0.0).collect();
        Ok(Self {
            n_delays,
            dopplers,
            metric,
            energies,
            valid,
            correlations: None,
            mac_count: 0,
        })
    }

    pub fn n_delays(&self) -> usize {
        self.n_delays
    }

    pub fn n_bins(&self) -> usize {
        self.dopplers.len()
    }

    pub fn dopplers(&self) -> &[f64] {
        &self.dopplers
    }

    pub fn metric(&self, delay: usize, bin: usize) -> f64 {
        self.metric[delay * self.dopplers.len() + bin]
    }

    pub fn metric_row(&self, delay: usize) -> &[f64] {
        let nb = self.dopplers.len();
        &self.metric[delay * nb..(delay + 1) * nb]
    }

    pub fn correlation(&self, delay: usize, bin: usize) -> Option<Complex64> {
        self.correlations
            .as_ref()
            .map(|c| c[delay * self.dopplers.len() + bin])
    }

    /// Retained pilot energy `D(d)`.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn is_valid(&self, delay: usize) -> bool {
        self.valid[delay]
    }

    /// Delays excluded because no pilot energy was retained.
    pub fn invalid_delays(&self) -> Vec<usize> {
        (0..self.n_delays).filter(|&d| !self.valid[d]).collect()
    }

    pub fn mac_count(&self) -> u64 {
        self.mac_count
    }

    pub fn max_metric(&self) -> f64 {
        (0..self.n_delays)
            .filter(|&d| self.valid[d])
            .flat_map(|d| self.metric_row(d).iter().copied())
            .fold(0.0, f64::max)
    }

    /// Writes `d,nu_hz,lambda,d_energy` rows for every valid cell.
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "d,nu_hz,lambda,d_energy")?;
        for d in (0..self.n_delays).filter(|&d| self.valid[d]) {
            for (i, nu) in self.dopplers.iter().enumerate() {
                writeln!(out, "{d},{nu},{:e},{:e}", self.metric(d, i), self.energies[d])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Outcome of a GLRT search.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionResult {
    pub delay: usize,
    pub doppler_hz: f64,
    pub doppler_bin: usize,
    pub peak_value: f64,
    pub pilot_index: Option<usize>,
    pub mac_count: u64,
}

/// Precomputed reduced correlator for one (mask, pilot, grid) triple.
///
/// Construction gathers the retained index set, the per-delay windows into
/// it, the conjugate Doppler phasors at retained instants and the retained
/// energies `D(d)`. [`ReducedCorrelator::correlate_compressed`] then works on
/// the compressed samples `y = P_omega r` alone.
#[derive(Debug, Clone)]
pub struct ReducedCorrelator {
    grid: SearchGrid,
    n_obs: usize,
    retained: Vec<usize>,
    windows: Vec<(usize, usize)>,
    energies: Vec<f64>,
    pilot_conj: Vec<Complex64>,
    phasors: Vec<Complex64>,
    keep_correlations: bool,
}

impl ReducedCorrelator {
    pub fn new(mask: &SamplingMask, pilot: &Pilot, grid: &SearchGrid) -> Result<Self> {
        let n_obs = mask.len();
        let ns = pilot.len();
        if n_obs < grid.min_observation(ns) {
            return Err(Error::Precondition(format!(
                "observation of {n_obs} samples is shorter than pilot ({ns}) + max delay ({})",
                grid.max_delay
            )));
        }
        let retained = mask.retained_indices();
        let windows: Vec<(usize, usize)> = (0..grid.n_delays())
            .map(|d| {
                let lo = retained.partition_point(|&n| n < d);
                let hi = retained.partition_point(|&n| n < d + ns);
                (lo, hi)
            })
            .collect();
        let s = pilot.samples();
        let energies = windows
            .iter()
            .enumerate()
            .map(|(d, &(lo, hi))| retained[lo..hi].iter().map(|&n| s[n - d].norm_sqr()).sum())
            .collect();
        let pilot_conj = s.iter().map(|z| z.conj()).collect();
        let phasors = grid
            .doppler
            .bins()
            .iter()
            .flat_map(|&nu| {
                retained
                    .iter()
                    .map(move |&n| doppler_phasor(nu, grid.sample_period, n).conj())
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            n_obs,
            retained,
            windows,
            energies,
            pilot_conj,
            phasors,
            keep_correlations: false,
        })
    }

    /// Also keep the complex correlations in produced surfaces.
    pub fn keep_correlations(mut self, keep: bool) -> Self {
        self.keep_correlations = keep;
        self
    }

    pub fn grid(&self) -> &SearchGrid {
        &self.grid
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Multiply-accumulates spent by one surface evaluation.
    pub fn mac_count(&self) -> u64 {
        let per_bin: u64 = self
            .windows
            .iter()
            .zip(&self.energies)
            .filter(|(_, &e)| e > 0.0)
            .map(|(&(lo, hi), _)| (hi - lo) as u64)
            .sum();
        per_bin * self.grid.n_bins() as u64
    }

    fn row(&self, y: &[Complex64], d: usize, metric: &mut [f64], corr: Option<&mut [Complex64]>, scratch: &mut Vec<Complex64>) {
        let (lo, hi) = self.windows[d];
        let energy = self.energies[d];
        if !(energy > 0.0) {
            metric.fill(0.0);
            return;
        }
        scratch.clear();
        scratch.extend(
            (lo..hi).map(|k| y[k] * self.pilot_conj[self.retained[k] - d]),
        );
        let stride = self.retained.len();
        let mut corr = corr;
        for (i, m) in metric.iter_mut().enumerate() {
            let ph = &self.phasors[i * stride + lo..i * stride + hi];
            let mut acc = Complex64::new(0.0, 0.0);
            for (p, e) in scratch.iter().zip(ph) {
                acc += p * e;
            }
            *m = acc.norm_sqr() / energy;
            if let Some(c) = corr.as_deref_mut() {
                c[i] = acc;
            }
        }
    }

    fn check_compressed(&self, y: &[Complex64]) -> Result<()> {
        if y.len() != self.retained.len() {
            return Err(Error::LengthMismatch {
                expected: self.retained.len(),
                actual: y.len(),
            });
        }
        Ok(())
    }

    fn assemble(&self, metric: Vec<f64>, correlations: Option<Vec<Complex64>>) -> AcquisitionSurface {
        AcquisitionSurface {
            n_delays: self.grid.n_delays(),
            dopplers: self.grid.doppler.bins().to_vec(),
            metric,
            energies: self.energies.clone(),
            valid: self.energies.iter().map(|&e| e > 0.0).collect(),
            correlations,
            mac_count: self.mac_count(),
        }
    }

    /// Surface from the compressed samples `y` (one per retained index).
    pub fn correlate_compressed(&self, y: &[Complex64]) -> Result<AcquisitionSurface> {
        self.check_compressed(y)?;
        let nb = self.grid.n_bins();
        let nd = self.grid.n_delays();
        let mut metric = vec![0.0; nd * nb];
        let mut corr = self.keep_correlations.then(|| vec![Complex64::new(0.0, 0.0); nd * nb]);
        let mut scratch = Vec::new();
        for d in 0..nd {
            let c = corr.as_mut().map(|c| &mut c[d * nb..(d + 1) * nb]);
            self.row(y, d, &mut metric[d * nb..(d + 1) * nb], c, &mut scratch);
        }
        Ok(self.assemble(metric, corr))
    }

    /// As [`Self::correlate_compressed`], spreading delay rows over the rayon
    /// pool. Output is bit-identical to the sequential path.
    pub fn correlate_compressed_par(&self, y: &[Complex64]) -> Result<AcquisitionSurface> {
        self.check_compressed(y)?;
        let nb = self.grid.n_bins();
        let nd = self.grid.n_delays();
        let mut metric = vec![0.0; nd * nb];
        let mut corr = self.keep_correlations.then(|| vec![Complex64::new(0.0, 0.0); nd * nb]);
        match corr.as_mut() {
            Some(c) => metric
                .par_chunks_mut(nb)
                .zip(c.par_chunks_mut(nb))
                .enumerate()
                .for_each_init(Vec::new, |scratch, (d, (m, c))| self.row(y, d, m, Some(c), scratch)),
            None => metric
                .par_chunks_mut(nb)
                .enumerate()
                .for_each_init(Vec::new, |scratch, (d, m)| self.row(y, d, m, None, scratch)),
        }
        Ok(self.assemble(metric, corr))
    }

    /// Surface from a full Nyquist-rate observation `r`; only the retained
    /// samples are read.
    pub fn correlate(&self, r: &[Complex64]) -> Result<AcquisitionSurface> {
        if r.len() != self.n_obs {
            return Err(Error::LengthMismatch {
                expected: self.n_obs,
                actual: r.len(),
            });
        }
        let y: Vec<Complex64> = self.retained.iter().map(|&n| r[n]).collect();
        self.correlate_compressed(&y)
    }
}

/// Reduced correlator `sum_{n in omega} r[n] s*[n-d] exp(-j 2 pi nu n T_s)`
/// normalized by the retained pilot energy.
pub fn reduced_correlate(r: &[Complex64], mask: &SamplingMask, pilot: &Pilot, grid: &SearchGrid) -> Result<AcquisitionSurface> {
    if r.len() != mask.len() {
        return Err(Error::LengthMismatch {
            expected: mask.len(),
            actual: r.len(),
        });
    }
    ReducedCorrelator::new(mask, pilot, grid)?.correlate(r)
}

/// Full-rate correlator evaluated directly over the pilot support, without a
/// mask.
pub fn full_correlate(r: &[Complex64], pilot: &Pilot, grid: &SearchGrid) -> Result<AcquisitionSurface> {
    let ns = pilot.len();
    if r.len() < grid.min_observation(ns) {
        return Err(Error::Precondition(format!(
            "observation of {} samples is shorter than pilot ({ns}) + max delay ({})",
            r.len(),
            grid.max_delay
        )));
    }
    let s = pilot.samples();
    let bins = grid.doppler.bins();
    let energy: f64 = s.iter().map(|z| z.norm_sqr()).sum();
    let mut metric = Vec::with_capacity(grid.n_delays() * bins.len());
    for d in 0..grid.n_delays() {
        for &nu in bins {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, sk) in s.iter().enumerate() {
                let n = k + d;
                acc += r[n] * sk.conj() * doppler_phasor(nu, grid.sample_period, n).conj();
            }
            metric.push(acc.norm_sqr() / energy);
        }
    }
    let mut surface = AcquisitionSurface::from_parts(bins.to_vec(), metric, vec![energy; grid.n_delays()])?;
    surface.mac_count = (ns * grid.n_delays() * bins.len()) as u64;
    Ok(surface)
}

/// Orders candidate cells: larger metric first, then smaller delay, smaller
/// |Doppler|, negative Doppler before positive.
fn cell_order(a: (f64, usize, f64), b: (f64, usize, f64)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then(a.1.cmp(&b.1))
        .then(a.2.abs().total_cmp(&b.2.abs()))
        .then(a.2.total_cmp(&b.2))
}

/// Arg-max of the surface with deterministic tie-breaking.
pub fn glrt_peak(surface: &AcquisitionSurface) -> Result<AcquisitionResult> {
    let mut best: Option<(f64, usize, f64, usize)> = None;
    for d in (0..surface.n_delays()).filter(|&d| surface.is_valid(d)) {
        for (i, (&v, &nu)) in surface.metric_row(d).iter().zip(surface.dopplers()).enumerate() {
            let better = match best {
                None => true,
                Some((bv, bd, bnu, _)) => cell_order((v, d, nu), (bv, bd, bnu)) == Ordering::Less,
            };
            if better {
                best = Some((v, d, nu, i));
            }
        }
    }
    let (peak_value, delay, doppler_hz, doppler_bin) = best.ok_or(Error::NoValidCell)?;
    Ok(AcquisitionResult {
        delay,
        doppler_hz,
        doppler_bin,
        peak_value,
        pilot_index: None,
        mac_count: surface.mac_count(),
    })
}

/// Joint arg-max over a pilot family and the delay-Doppler grid. Ties go to
/// the lowest pilot index. `mac_count` totals the work over all pilots.
pub fn joint_search(r: &[Complex64], mask: &SamplingMask, pilots: &[Pilot], grid: &SearchGrid) -> Result<AcquisitionResult> {
    if pilots.is_empty() {
        return Err(Error::EmptyInput("pilot family is empty".into()));
    }
    let mut best: Option<AcquisitionResult> = None;
    let mut total_macs = 0;
    for (m, pilot) in pilots.iter().enumerate() {
        let mut res = glrt_peak(&reduced_correlate(r, mask, pilot, grid)?)?;
        total_macs += res.mac_count;
        res.pilot_index = Some(m);
        if best.as_ref().is_none_or(|b| res.peak_value > b.peak_value) {
            best = Some(res);
        }
    }
    let mut best = best.expect("non-empty family");
    best.mac_count = total_macs;
    Ok(best)
}
