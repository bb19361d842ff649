//! Offline exhaustive coset selection.
//!
//! Every `K`-subset of `{0, .., L-1}` is scored by probing the reduced
//! correlator with noiseless pilots at three reference delays and a few
//! design Doppler values. The cost is the mean worst-case sidelobe-to-peak
//! ratio divided by the retained-energy balance; lower is better.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlator::{AcquisitionSurface, DopplerGrid, ReducedCorrelator, SearchGrid};
use crate::error::{Error, Result};
use crate::multicoset::{enumerate_patterns, make_mask, CosetPattern, DEFAULT_ENUMERATION_CAP};
use crate::pilot::Pilot;
use crate::signal::{doppler_phasor, synthesize_received, SynthesisParams};

/// Inputs of one exhaustive design run for a fixed `(L, K)`.
#[derive(Debug, Clone)]
pub struct DesignConfig {
    pub period: usize,
    pub kept: usize,
    pub pilot: Pilot,
    pub max_delay: usize,
    /// Doppler values used to generate the probe signals, snapped to
    /// `surface_doppler` bins.
    pub design_dopplers: Vec<f64>,
    /// Doppler hypotheses of the scored surface.
    pub surface_doppler: DopplerGrid,
    pub sample_period: f64,
    pub enumeration_cap: u64,
}

impl DesignConfig {
    /// Configuration probing `{-max, 0, +max}` on `surface_doppler`.
    pub fn new(period: usize, kept: usize, pilot: Pilot, max_delay: usize, surface_doppler: DopplerGrid, sample_period: f64) -> Self {
        let edge = surface_doppler.bins().last().copied().unwrap_or(0.0);
        Self {
            period,
            kept,
            pilot,
            max_delay,
            design_dopplers: vec![-edge, 0.0, edge],
            surface_doppler,
            sample_period,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kept == 0 || self.kept > self.period {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= K <= L, got L = {}, K = {}",
                self.period, self.kept
            )));
        }
        if self.max_delay < 4 {
            return Err(Error::InvalidParameter(format!(
                "max delay must be >= 4 for distinct reference delays, got {}",
                self.max_delay
            )));
        }
        if self.design_dopplers.is_empty() || !self.design_dopplers.contains(&0.0) {
            return Err(Error::InvalidParameter("design Doppler set must be non-empty and contain 0 Hz".into()));
        }
        if !(self.sample_period > 0.0) {
            return Err(Error::InvalidParameter("sample period must be > 0".into()));
        }
        Ok(())
    }

    /// Observation length `N_s + d_max`.
    pub fn n_obs(&self) -> usize {
        self.pilot.len() + self.max_delay
    }

    pub fn grid(&self) -> SearchGrid {
        SearchGrid {
            max_delay: self.max_delay,
            doppler: self.surface_doppler.clone(),
            sample_period: self.sample_period,
        }
    }

    /// Design Doppler values snapped to surface bins, as bin indices.
    fn probe_bins(&self) -> Vec<usize> {
        let mut bins: Vec<usize> = self
            .design_dopplers
            .iter()
            .map(|&nu| self.surface_doppler.nearest_bin(nu))
            .collect();
        bins.dedup();
        bins
    }

    pub fn echo(&self) -> DesignEcho {
        DesignEcho {
            period: self.period,
            kept: self.kept,
            pilot_label: self.pilot.label().to_string(),
            pilot_length: self.pilot.len(),
            max_delay: self.max_delay,
            design_dopplers_hz: self.design_dopplers.clone(),
            surface_bin_width_hz: self.surface_doppler.bin_width(),
            surface_bins: self.surface_doppler.len(),
            sample_period_s: self.sample_period,
        }
    }
}

/// Configuration summary stored alongside design results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignEcho {
    pub period: usize,
    pub kept: usize,
    pub pilot_label: String,
    pub pilot_length: usize,
    pub max_delay: usize,
    pub design_dopplers_hz: Vec<f64>,
    pub surface_bin_width_hz: f64,
    pub surface_bins: usize,
    pub sample_period_s: f64,
}

/// Score and configuration attached to a designed pattern file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignProvenance {
    pub score: DesignScore,
    pub config: DesignEcho,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpr {
    pub delay: usize,
    #[serde(with = "lossless_f64")]
    pub spr: f64,
}

/// Per-pattern design score. Degenerate patterns carry `cost = +inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignScore {
    #[serde(with = "lossless_f64")]
    pub mean_spr: f64,
    #[serde(with = "lossless_f64")]
    pub mean_balance: f64,
    #[serde(with = "lossless_f64")]
    pub cost: f64,
    pub per_delay_spr: Vec<DelaySpr>,
    #[serde(with = "lossless_f64")]
    pub balance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
}

impl DesignScore {
    fn degenerate(reason: String) -> Self {
        Self {
            mean_spr: f64::INFINITY,
            mean_balance: 0.0,
            cost: f64::INFINITY,
            per_delay_spr: Vec::new(),
            balance: 0.0,
            degenerate: Some(reason),
        }
    }

    fn from_parts(per_delay_spr: Vec<DelaySpr>, balance: f64) -> Self {
        let mean_spr = per_delay_spr.iter().map(|p| p.spr).sum::<f64>() / per_delay_spr.len() as f64;
        // the balance does not depend on the reference delay, so its mean is itself
        let mean_balance = balance;
        Self {
            mean_spr,
            mean_balance,
            cost: mean_spr / mean_balance,
            per_delay_spr,
            balance,
            degenerate: None,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.is_some()
    }
}

// JSON has no infinities; non-finite values are written as strings.
mod lossless_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("invalid number {other:?}"))),
            },
        }
    }
}

/// `{floor(d/4), floor(d/2), floor(3d/4)}`, deduplicated and ascending.
pub fn reference_delays(max_delay: usize) -> Result<Vec<usize>> {
    if max_delay < 4 {
        return Err(Error::InvalidParameter(format!(
            "max delay must be >= 4, got {max_delay}"
        )));
    }
    let mut v = vec![max_delay / 4, max_delay / 2, 3 * max_delay / 4];
    v.dedup();
    Ok(v)
}

/// The 3x3 delay/Doppler-bin neighbourhood excluded from the sidelobe search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuardRegion {
    pub delay: usize,
    pub bin: usize,
}

pub fn guard_region(delay: usize, bin: usize) -> GuardRegion {
    GuardRegion { delay, bin }
}

impl GuardRegion {
    pub fn contains(&self, delay: usize, bin: usize) -> bool {
        delay.abs_diff(self.delay) <= 1 && bin.abs_diff(self.bin) <= 1
    }

    /// Number of cells inside the region once clipped to the grid.
    pub fn cell_count(&self, n_delays: usize, n_bins: usize) -> usize {
        let span = |c: usize, n: usize| (c.saturating_sub(1)..=(c + 1).min(n.saturating_sub(1))).count();
        span(self.delay, n_delays) * span(self.bin, n_bins)
    }
}

fn spr_on(metric: &[f64], valid: &[bool], n_bins: usize, delay: usize, bin: usize) -> Result<f64> {
    let n_delays = valid.len();
    if delay >= n_delays || bin >= n_bins {
        return Err(Error::InvalidParameter(format!("peak cell ({delay}, {bin}) outside the grid")));
    }
    let guard = guard_region(delay, bin);
    if guard.cell_count(n_delays, n_bins) >= n_delays * n_bins {
        return Err(Error::InvalidParameter("search grid is not larger than the guard region".into()));
    }
    let peak = metric[delay * n_bins + bin];
    if !valid[delay] || !(peak > 0.0) {
        return Err(Error::Degenerate(format!("zero peak at delay {delay}, bin {bin}")));
    }
    let mut side = 0.0f64;
    for d in (0..n_delays).filter(|&d| valid[d]) {
        for (i, &v) in metric[d * n_bins..(d + 1) * n_bins].iter().enumerate() {
            if !guard.contains(d, i) {
                side = side.max(v);
            }
        }
    }
    Ok(side / peak)
}

/// Largest metric outside the guard region divided by the metric at
/// `(delay, bin)`.
pub fn sidelobe_peak_ratio(surface: &AcquisitionSurface, delay: usize, bin: usize) -> Result<f64> {
    let n_bins = surface.n_bins();
    let metric: Vec<f64> = (0..surface.n_delays())
        .flat_map(|d| surface.metric_row(d).iter().copied())
        .collect();
    let valid: Vec<bool> = (0..surface.n_delays()).map(|d| surface.is_valid(d)).collect();
    spr_on(&metric, &valid, n_bins, delay, bin)
}

/// `min D / max D` over the searched delays.
pub fn energy_balance(energies: &[f64]) -> Result<f64> {
    if energies.is_empty() {
        return Err(Error::EmptyInput("no delays to balance".into()));
    }
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) {
        return Err(Error::Degenerate("no pilot energy retained at any delay".into()));
    }
    if !(min > 0.0) {
        return Err(Error::Degenerate("some delay retains no pilot energy".into()));
    }
    Ok(min / max)
}

/// Scores one pattern by synthesizing the probe signals and running the
/// reduced correlator on each.
pub fn score_pattern(pattern: &CosetPattern, cfg: &DesignConfig) -> Result<DesignScore> {
    cfg.validate()?;
    let refs = reference_delays(cfg.max_delay)?;
    let n_obs = cfg.n_obs();
    let grid = cfg.grid();
    let correlator = ReducedCorrelator::new(&make_mask(pattern, n_obs)?, &cfg.pilot, &grid)?;
    let balance = match energy_balance(correlator.energies()) {
        Ok(b) => b,
        Err(Error::Degenerate(why)) => return Ok(DesignScore::degenerate(why)),
        Err(e) => return Err(e),
    };
    let mut per_delay = Vec::with_capacity(refs.len());
    for &d0 in &refs {
        let mut worst = 0.0f64;
        for bin in cfg.probe_bins() {
            let nu = grid.doppler.bins()[bin];
            let r = synthesize_received(&cfg.pilot, &SynthesisParams::noiseless(d0, nu, cfg.sample_period), n_obs)?;
            let surface = correlator.correlate(&r)?;
            match sidelobe_peak_ratio(&surface, d0, bin) {
                Ok(spr) => worst = worst.max(spr),
                Err(Error::Degenerate(why)) => return Ok(DesignScore::degenerate(why)),
                Err(e) => return Err(e),
            }
        }
        per_delay.push(DelaySpr { delay: d0, spr: worst });
    }
    Ok(DesignScore::from_parts(per_delay, balance))
}

/// Exhaustive scorer for one `(L, K)`.
///
/// A pattern mask is periodic in `L`, so each probe correlation splits into
/// `L` partial sums, one per residue `n mod L`. They are computed once; a
/// pattern's surface is then the sum of its `K` partials.
pub struct CosetDesigner {
    cfg: DesignConfig,
    refs: Vec<usize>,
    probe_bins: Vec<usize>,
    n_delays: usize,
    n_bins: usize,
    partials: Vec<Complex64>,
    pilot_power: Vec<f64>,
}

impl CosetDesigner {
    pub fn new(cfg: &DesignConfig) -> Result<Self> {
        cfg.validate()?;
        let refs = reference_delays(cfg.max_delay)?;
        let probe_bins = cfg.probe_bins();
        let grid = cfg.grid();
        let (n_delays, n_bins) = (grid.n_delays(), grid.n_bins());
        let n_obs = cfg.n_obs();
        let period = cfg.period;
        let s = cfg.pilot.samples();

        let phasors: Vec<Complex64> = (0..n_obs)
            .flat_map(|n| {
                grid.doppler
                    .bins()
                    .iter()
                    .map(move |&nu| doppler_phasor(nu, cfg.sample_period, n).conj())
            })
            .collect();

        let cases: Vec<(usize, usize)> = refs
            .iter()
            .flat_map(|&d0| probe_bins.iter().map(move |&b| (d0, b)))
            .collect();
        let case_len = n_delays * n_bins;
        let stride = cases.len() * case_len;

        // [residue][case][delay][bin]
        let per_case: Vec<Vec<Complex64>> = cases
            .par_iter()
            .map(|&(d0, bin)| -> Result<Vec<Complex64>> {
                let nu = grid.doppler.bins()[bin];
                let r = synthesize_received(&cfg.pilot, &SynthesisParams::noiseless(d0, nu, cfg.sample_period), n_obs)?;
                let mut acc = vec![Complex64::new(0.0, 0.0); period * case_len];
                for d in 0..n_delays {
                    for (k, sk) in s.iter().enumerate() {
                        let n = k + d;
                        let prod = r[n] * sk.conj();
                        let base = (n % period) * case_len + d * n_bins;
                        let ph = &phasors[n * n_bins..(n + 1) * n_bins];
                        for (a, e) in acc[base..base + n_bins].iter_mut().zip(ph) {
                            *a += prod * e;
                        }
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut partials = vec![Complex64::new(0.0, 0.0); period * stride];
        for (c, block) in per_case.iter().enumerate() {
            for res in 0..period {
                let dst = res * stride + c * case_len;
                partials[dst..dst + case_len].copy_from_slice(&block[res * case_len..(res + 1) * case_len]);
            }
        }
        Ok(Self {
            cfg: cfg.clone(),
            refs,
            probe_bins,
            n_delays,
            n_bins,
            partials,
            pilot_power: s.iter().map(|z| z.norm_sqr()).collect(),
        })
    }

    pub fn config(&self) -> &DesignConfig {
        &self.cfg
    }

    /// Retained pilot energy per delay, summed in pilot-index order.
    fn energies(&self, member: &[bool]) -> Vec<f64> {
        let period = self.cfg.period;
        (0..self.n_delays)
            .map(|d| {
                self.pilot_power
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| member[(k + d) % period])
                    .map(|(_, p)| p)
                    .sum()
            })
            .collect()
    }

    /// Scores `pattern`, which must have this designer's period.
    pub fn score(&self, pattern: &CosetPattern) -> Result<DesignScore> {
        if pattern.period() != self.cfg.period {
            return Err(Error::InvalidParameter(format!(
                "pattern period {} does not match designer period {}",
                pattern.period(),
                self.cfg.period
            )));
        }
        let member: Vec<bool> = (0..self.cfg.period).map(|r| pattern.contains(r)).collect();
        let energies = self.energies(&member);
        let balance = match energy_balance(&energies) {
            Ok(b) => b,
            Err(Error::Degenerate(why)) => return Ok(DesignScore::degenerate(why)),
            Err(e) => return Err(e),
        };
        let case_len = self.n_delays * self.n_bins;
        let stride = self.refs.len() * self.probe_bins.len() * case_len;
        let mut chi = vec![Complex64::new(0.0, 0.0); stride];
        for &c in pattern.cosets() {
            for (a, p) in chi.iter_mut().zip(&self.partials[c * stride..(c + 1) * stride]) {
                *a += p;
            }
        }
        let valid = vec![true; self.n_delays];
        let mut metric = vec![0.0; case_len];
        let mut per_delay = Vec::with_capacity(self.refs.len());
        for (ri, &d0) in self.refs.iter().enumerate() {
            let mut worst = 0.0f64;
            for (pi, &bin) in self.probe_bins.iter().enumerate() {
                let case = ri * self.probe_bins.len() + pi;
                let block = &chi[case * case_len..(case + 1) * case_len];
                for (d, (row, src)) in metric.chunks_mut(self.n_bins).zip(block.chunks(self.n_bins)).enumerate() {
                    for (m, z) in row.iter_mut().zip(src) {
                        *m = z.norm_sqr() / energies[d];
                    }
                }
                match spr_on(&metric, &valid, self.n_bins, d0, bin) {
                    Ok(spr) => worst = worst.max(spr),
                    Err(Error::Degenerate(why)) => return Ok(DesignScore::degenerate(why)),
                    Err(e) => return Err(e),
                }
            }
            per_delay.push(DelaySpr { delay: d0, spr: worst });
        }
        Ok(DesignScore::from_parts(per_delay, balance))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPattern {
    pub pattern: CosetPattern,
    pub score: DesignScore,
}

/// Scores all `C(L, K)` patterns and returns them sorted by ascending cost,
/// ties broken by lexicographic coset order. The first entry is the optimum.
pub fn design_cosets(cfg: &DesignConfig) -> Result<Vec<RankedPattern>> {
    cfg.validate()?;
    let patterns: Vec<CosetPattern> = enumerate_patterns(cfg.period, cfg.kept, cfg.enumeration_cap)?.collect();
    let designer = CosetDesigner::new(cfg)?;
    let mut ranked = patterns
        .into_par_iter()
        .map(|pattern| {
            let score = designer.score(&pattern)?;
            Ok(RankedPattern { pattern, score })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        a.score
            .cost
            .total_cmp(&b.score.cost)
            .then_with(|| a.pattern.cosets().cmp(b.pattern.cosets()))
    });
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedEntry {
    pub rank: usize,
    pub period: usize,
    pub kept: usize,
    pub cosets: Vec<usize>,
    pub score: DesignScore,
}

/// Ranked design results plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignReport {
    pub config: DesignEcho,
    pub total_patterns: usize,
    pub ranked: Vec<RankedEntry>,
}

impl DesignReport {
    /// Keeps the best `top` entries (all when `top` is `None`).
    pub fn new(cfg: &DesignConfig, ranked: &[RankedPattern], top: Option<usize>) -> Self {
        let take = top.unwrap_or(ranked.len()).min(ranked.len());
        Self {
            config: cfg.echo(),
            total_patterns: ranked.len(),
            ranked: ranked[..take]
                .iter()
                .enumerate()
                .map(|(i, r)| RankedEntry {
                    rank: i + 1,
                    period: r.pattern.period(),
                    kept: r.pattern.kept(),
                    cosets: r.pattern.cosets().to_vec(),
                    score: r.score.clone(),
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
