//! Monte Carlo campaigns: per-trial acquisition, delay/Doppler RMSE versus
//! SNR with bootstrap intervals, and mean acquisition time measured both in
//! wall-clock and in multiply-accumulate counts.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlator::{glrt_peak, make_doppler_grid, ReducedCorrelator, SearchGrid};
use crate::error::{Error, Result};
use crate::multicoset::{make_mask, subsample, CosetPattern, SamplingMask};
use crate::pilot::{build_nr_pilot, build_pss_pilot, generate_synthetic_pilot, NumerologyConfig, Pilot};
use crate::signal::{role_rng, snr_to_noise_variance, split_seed, synthesize_received, RngRole, SynthesisParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PilotSelection {
    /// PSS + SSS block, or the PSS symbol alone.
    Nr { n_id1: u16, n_id2: u8, pss_only: bool },
    Synthetic { length: usize, seed: u64 },
}

impl PilotSelection {
    pub fn build(&self, numerology: &NumerologyConfig) -> Result<Pilot> {
        match *self {
            PilotSelection::Nr { n_id2, pss_only: true, .. } => build_pss_pilot(n_id2, numerology),
            PilotSelection::Nr { n_id1, n_id2, pss_only: false } => build_nr_pilot(n_id1, n_id2, numerology),
            PilotSelection::Synthetic { length, seed } => generate_synthetic_pilot(length, seed),
        }
    }
}

impl Default for PilotSelection {
    fn default() -> Self {
        PilotSelection::Nr {
            n_id1: 0,
            n_id2: 0,
            pss_only: false,
        }
    }
}

/// Monte Carlo scenario. Defaults follow the 5G NR evaluation setup:
/// +-20 kHz Doppler, 15 kHz SCS, 3.84 MHz, 256-point FFT, 5000 trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub numerology: NumerologyConfig,
    pub doppler_max_hz: f64,
    pub observation_time_s: f64,
    pub max_delay: usize,
    pub snr_list_db: Vec<f64>,
    pub trials: usize,
    pub patterns: Vec<CosetPattern>,
    pub master_seed: u64,
    pub pilot: PilotSelection,
    /// Round each drawn Doppler to its nearest grid bin.
    pub snap_true_doppler: bool,
    pub bootstrap_resamples: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            numerology: NumerologyConfig::nr_default(),
            doppler_max_hz: 20e3,
            observation_time_s: 1e-3,
            max_delay: 64,
            snr_list_db: (0..16).map(|i| -20.0 + 2.0 * i as f64).collect(),
            trials: 5000,
            patterns: Vec::new(),
            master_seed: 1,
            pilot: PilotSelection::default(),
            snap_true_doppler: false,
            bootstrap_resamples: 1000,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.numerology.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.max_delay < 4 {
            return Err(Error::InvalidParameter("max delay must be >= 4".into()));
        }
        if self.snr_list_db.is_empty() {
            return Err(Error::InvalidParameter("SNR list is empty".into()));
        }
        Ok(())
    }

    /// Uniform benchmark followed by the configured patterns, duplicates removed.
    pub fn campaign_patterns(&self) -> Vec<CosetPattern> {
        let mut out = vec![CosetPattern::uniform()];
        for p in &self.patterns {
            if !out.contains(p) {
                out.push(p.clone());
            }
        }
        out
    }
}

/// Scenario objects shared by every trial.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub cfg: ScenarioConfig,
    pub pilot: Pilot,
    pub grid: SearchGrid,
    pub n_obs: usize,
}

/// Mask and precomputed correlator of one pattern.
#[derive(Debug, Clone)]
pub struct AcquisitionPlan {
    pub pattern: CosetPattern,
    pub mask: SamplingMask,
    pub correlator: ReducedCorrelator,
}

impl PreparedScenario {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let pilot = cfg.pilot.build(&cfg.numerology)?;
        let doppler = make_doppler_grid(cfg.doppler_max_hz, cfg.observation_time_s)?;
        let grid = SearchGrid::new(cfg.max_delay, doppler, cfg.numerology.sample_period())?;
        let n_obs = grid.min_observation(pilot.len());
        Ok(Self {
            cfg: cfg.clone(),
            pilot,
            grid,
            n_obs,
        })
    }

    pub fn plan(&self, pattern: &CosetPattern) -> Result<AcquisitionPlan> {
        let mask = make_mask(pattern, self.n_obs)?;
        let correlator = ReducedCorrelator::new(&mask, &self.pilot, &self.grid)?;
        Ok(AcquisitionPlan {
            pattern: pattern.clone(),
            mask,
            correlator,
        })
    }

    /// Draws the true delay (uniform on the searched set) and Doppler
    /// (uniform on `[-max, +max]`) of a trial.
    pub fn draw_truth(&self, trial_seed: u64) -> (usize, f64) {
        let mut rng = role_rng(trial_seed, RngRole::Parameters);
        let delay = rng.random_range(0..=self.cfg.max_delay);
        let nu_max = self.cfg.doppler_max_hz;
        let mut nu = rng.random_range(-nu_max..=nu_max);
        if self.cfg.snap_true_doppler {
            nu = self.grid.doppler.bins()[self.grid.doppler.nearest_bin(nu)];
        }
        (delay, nu)
    }

    pub fn run_trial(&self, plan: &AcquisitionPlan, snr_db: f64, trial_seed: u64) -> Result<TrialRecord> {
        let (true_delay, true_doppler_hz) = self.draw_truth(trial_seed);
        let params = SynthesisParams {
            delay_samples: true_delay,
            doppler_hz: true_doppler_hz,
            amplitude: num_complex::Complex64::new(1.0, 0.0),
            sample_period: self.grid.sample_period,
            noise_variance: snr_to_noise_variance(snr_db, &self.pilot)?,
            rng_seed: trial_seed,
        };
        let r = synthesize_received(&self.pilot, &params, self.n_obs)?;
        let y = subsample(&r, &plan.mask)?;

        let start = Instant::now();
        let surface = plan.correlator.correlate_compressed(&y)?;
        let result = glrt_peak(&surface)?;
        let elapsed_s = start.elapsed().as_secs_f64();

        Ok(TrialRecord {
            true_delay,
            true_doppler_hz,
            est_delay: result.delay,
            est_doppler_hz: result.doppler_hz,
            snr_db,
            pattern: plan.pattern.id(),
            elapsed_s,
            mac_count: result.mac_count,
            peak_value: result.peak_value,
        })
    }
}

/// One acquisition of a Monte Carlo campaign.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub true_delay: usize,
    pub true_doppler_hz: f64,
    pub est_delay: usize,
    pub est_doppler_hz: f64,
    pub snr_db: f64,
    pub pattern: String,
    /// Wall-clock of the correlate + peak stage.
    pub elapsed_s: f64,
    pub mac_count: u64,
    pub peak_value: f64,
}

impl TrialRecord {
    pub fn delay_error(&self) -> f64 {
        self.est_delay as f64 - self.true_delay as f64
    }

    pub fn doppler_error(&self) -> f64 {
        self.est_doppler_hz - self.true_doppler_hz
    }
}

/// Runs one trial from scratch; campaigns reuse a [`PreparedScenario`] instead.
pub fn run_trial(cfg: &ScenarioConfig, pattern: &CosetPattern, snr_db: f64, trial_seed: u64) -> Result<TrialRecord> {
    let prepared = PreparedScenario::new(cfg)?;
    let plan = prepared.plan(pattern)?;
    prepared.run_trial(&plan, snr_db, trial_seed)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut n = 0usize;
    for v in values {
        acc.add(v * v);
        n += 1;
    }
    (acc.value() / n as f64).sqrt()
}

/// Delay RMSE in samples and Doppler RMSE in Hz.
pub fn compute_rmse(records: &[TrialRecord]) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no trial records".into()));
    }
    Ok((
        rms(records.iter().map(TrialRecord::delay_error)),
        rms(records.iter().map(TrialRecord::doppler_error)),
    ))
}

/// Percentile bootstrap 95% intervals of the delay and Doppler RMSE.
fn bootstrap_ci(records: &[TrialRecord], resamples: usize, seed: u64) -> ([f64; 2], [f64; 2]) {
    let n = records.len();
    if resamples == 0 || n < 2 {
        let (d, f) = compute_rmse(records).unwrap_or((0.0, 0.0));
        return ([d, d], [f, f]);
    }
    let mut rng = role_rng(seed, RngRole::Bootstrap);
    let mut delay = Vec::with_capacity(resamples);
    let mut doppler = Vec::with_capacity(resamples);
    let mut idx = vec![0usize; n];
    for _ in 0..resamples {
        idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
        delay.push(rms(idx.iter().map(|&i| records[i].delay_error())));
        doppler.push(rms(idx.iter().map(|&i| records[i].doppler_error())));
    }
    let interval = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let at = |q: f64| v[((q * (v.len() - 1) as f64).round()) as usize];
        [at(0.025), at(0.975)]
    };
    (interval(&mut delay), interval(&mut doppler))
}

/// Statistics of one (pattern, SNR) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub pattern: String,
    pub cosets: String,
    pub snr_db: f64,
    pub trials: usize,
    pub delay_rmse: f64,
    pub doppler_rmse: f64,
    pub delay_ci: [f64; 2],
    pub doppler_ci: [f64; 2],
    pub mta_s: f64,
    pub mac_count: f64,
    pub records: Vec<TrialRecord>,
}

/// Per-pattern acquisition cost relative to the uniform benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternReport {
    pub pattern: CosetPattern,
    pub mta_s: f64,
    pub wallclock_gain: f64,
    pub mac_count: f64,
    pub mac_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub config: ScenarioConfig,
    pub pilot_label: String,
    pub doppler_bin_width_hz: f64,
    pub cells: Vec<CellReport>,
    pub patterns: Vec<PatternReport>,
}

impl CampaignReport {
    pub fn cell(&self, pattern: &CosetPattern, snr_db: f64) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.pattern == pattern.id() && c.cosets == pattern.cosets_string() && c.snr_db == snr_db)
    }

    pub fn pattern(&self, pattern: &CosetPattern) -> Option<&PatternReport> {
        self.patterns.iter().find(|p| &p.pattern == pattern)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut n = 0usize;
    values.for_each(|v| {
        acc.add(v);
        n += 1;
    });
    acc.value() / n as f64
}

/// Runs every (pattern, SNR) cell on the current rayon pool. Trial `t` at
/// SNR index `s` uses the same seed for every pattern.
pub fn run_campaign(cfg: &ScenarioConfig) -> Result<CampaignReport> {
    let prepared = PreparedScenario::new(cfg)?;
    let patterns = cfg.campaign_patterns();
    let mut cells = Vec::new();
    let mut timing = Vec::new();
    for (pi, pattern) in patterns.iter().enumerate() {
        let plan = prepared.plan(pattern)?;
        let mut elapsed = Vec::new();
        let mut macs = Vec::new();
        for (si, &snr_db) in cfg.snr_list_db.iter().enumerate() {
            let records = (0..cfg.trials)
                .into_par_iter()
                .map(|t| prepared.run_trial(&plan, snr_db, split_seed(cfg.master_seed, &[si as u64, t as u64])))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Precondition(format!("pattern {pattern} at {snr_db} dB: {e}")))?;
            let (delay_rmse, doppler_rmse) = compute_rmse(&records)?;
            let (delay_ci, doppler_ci) = bootstrap_ci(
                &records,
                cfg.bootstrap_resamples,
                split_seed(cfg.master_seed, &[u64::MAX, pi as u64, si as u64]),
            );
            elapsed.extend(records.iter().map(|r| r.elapsed_s));
            macs.extend(records.iter().map(|r| r.mac_count as f64));
            cells.push(CellReport {
                pattern: pattern.id(),
                cosets: pattern.cosets_string(),
                snr_db,
                trials: records.len(),
                delay_rmse,
                doppler_rmse,
                delay_ci,
                doppler_ci,
                mta_s: mean(records.iter().map(|r| r.elapsed_s)),
                mac_count: mean(records.iter().map(|r| r.mac_count as f64)),
                records,
            });
        }
        timing.push((pattern.clone(), mean(elapsed.into_iter()), mean(macs.into_iter())));
    }
    let (uniform_mta, uniform_macs) = (timing[0].1, timing[0].2);
    let patterns = timing
        .into_iter()
        .map(|(pattern, mta_s, mac_count)| PatternReport {
            pattern,
            mta_s,
            wallclock_gain: uniform_mta / mta_s,
            mac_count,
            mac_gain: uniform_macs / mac_count,
        })
        .collect();
    Ok(CampaignReport {
        config: cfg.clone(),
        pilot_label: prepared.pilot.label().to_string(),
        doppler_bin_width_hz: prepared.grid.doppler.bin_width(),
        cells,
        patterns,
    })
}

fn provenance_header(report: &CampaignReport, what: &str) -> Result<String> {
    Ok(format!(
        "# coset-acq {what}\n# pilot: {}\n# config: {}\n",
        report.pilot_label,
        serde_json::to_string(&report.config)?
    ))
}

/// Writes `rmse.csv`, `mta.csv`, `fig-delay.dat` and `fig-doppler.dat`.
/// Everything except the `mta_ms` and `wallclock_gain` columns is
/// byte-deterministic given the master seed.
pub fn write_campaign(report: &CampaignReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut rmse = provenance_header(report, "rmse")?;
    rmse.push_str("pattern,cosets,snr_db,trials,delay_rmse,doppler_rmse,delay_ci_low,delay_ci_high,doppler_ci_low,doppler_ci_high\n");
    for c in &report.cells {
        writeln!(
            rmse,
            "{},{},{},{},{},{},{},{},{},{}",
            c.pattern,
            c.cosets,
            c.snr_db,
            c.trials,
            c.delay_rmse,
            c.doppler_rmse,
            c.delay_ci[0],
            c.delay_ci[1],
            c.doppler_ci[0],
            c.doppler_ci[1]
        )
        .expect("write to String");
    }
    std::fs::write(dir.join("rmse.csv"), rmse)?;

    let mut mta = provenance_header(report, "mta")?;
    mta.push_str("pattern,cosets,mta_ms,wallclock_gain,mac_count,mac_gain\n");
    for p in &report.patterns {
        writeln!(
            mta,
            "{},{},{},{},{},{}",
            p.pattern.id(),
            p.pattern.cosets_string(),
            p.mta_s * 1e3,
            p.wallclock_gain,
            p.mac_count,
            p.mac_gain
        )
        .expect("write to String");
    }
    std::fs::write(dir.join("mta.csv"), mta)?;

    for (name, pick) in [
        ("fig-delay.dat", (|c: &CellReport| c.delay_rmse) as fn(&CellReport) -> f64),
        ("fig-doppler.dat", |c: &CellReport| c.doppler_rmse),
    ] {
        let mut out = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
        out.write_all(provenance_header(report, name)?.as_bytes())?;
        write!(out, "# snr_db")?;
        for p in &report.patterns {
            write!(out, " {}[{}]", p.pattern.id(), p.pattern.cosets().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","))?;
        }
        writeln!(out)?;
        for &snr in &report.config.snr_list_db {
            write!(out, "{snr}")?;
            for p in &report.patterns {
                let cell = report.cell(&p.pattern, snr).expect("cell for every pattern and SNR");
                write!(out, " {}", pick(cell))?;
            }
            writeln!(out)?;
        }
        out.flush()?;
    }
    Ok(())
}

/// Mean-acquisition-time table in the layout of the reference comparison.
pub fn format_mta_table(report: &CampaignReport) -> String {
    let mut s = String::new();
    writeln!(s, "{:<10} {:<26} {:>10} {:>9} {:>9}", "Config", "Sample instants", "MTA ms", "Gain", "MAC gain").unwrap();
    for p in &report.patterns {
        let (config, cosets) = if p.pattern == CosetPattern::uniform() {
            ("All".to_string(), "-".to_string())
        } else {
            (format!("{}/{}", p.pattern.period(), p.pattern.kept()), format!("{:?}", p.pattern.cosets()))
        };
        writeln!(
            s,
            "{:<10} {:<26} {:>10.3} {:>8.1}x {:>8.1}x",
            config,
            cosets,
            p.mta_s * 1e3,
            p.wallclock_gain,
            p.mac_gain
        )
        .unwrap();
    }
    s
}
