//! TOML configuration shared by the command-line workflows.
//!
//! Every key is optional; missing keys fall back to the 5G NR scenario
//! defaults. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correlator::make_doppler_grid;
use crate::design::DesignConfig;
use crate::error::{Error, Result};
use crate::harness::{PilotSelection, ScenarioConfig};
use crate::multicoset::{CosetPattern, DEFAULT_ENUMERATION_CAP};
use crate::pilot::NumerologyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub sampling_frequency_hz: f64,
    pub fft_size: usize,
    pub subcarrier_spacing_hz: f64,
    pub subcarrier_offset: usize,
    pub doppler_max_hz: f64,
    pub observation_time_s: f64,
    pub max_delay_samples: usize,
    pub snr_list_db: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub bootstrap_resamples: usize,
    pub patterns: Vec<CosetPattern>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        Self {
            sampling_frequency_hz: s.numerology.sampling_frequency_hz,
            fft_size: s.numerology.fft_size,
            subcarrier_spacing_hz: s.numerology.subcarrier_spacing_hz,
            subcarrier_offset: s.numerology.subcarrier_offset,
            doppler_max_hz: s.doppler_max_hz,
            observation_time_s: s.observation_time_s,
            max_delay_samples: s.max_delay,
            snr_list_db: s.snr_list_db,
            trials: s.trials,
            master_seed: s.master_seed,
            bootstrap_resamples: s.bootstrap_resamples,
            patterns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotKind {
    Nr,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotSection {
    pub kind: PilotKind,
    pub n_id1: u16,
    pub n_id2: u8,
    pub pss_only: bool,
    pub synthetic_length_samples: usize,
    pub synthetic_seed: u64,
}

impl Default for PilotSection {
    fn default() -> Self {
        Self {
            kind: PilotKind::Nr,
            n_id1: 0,
            n_id2: 0,
            pss_only: false,
            synthetic_length_samples: 1024,
            synthetic_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    /// Probe Doppler values; `[-doppler_max_hz, 0, +doppler_max_hz]` when unset.
    pub design_dopplers_hz: Option<Vec<f64>>,
    /// Max delay of the design grid; the scenario value when unset.
    pub max_delay_samples: Option<usize>,
    pub report_top: usize,
    pub enumeration_cap: u64,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            design_dopplers_hz: None,
            max_delay_samples: None,
            report_top: 20,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfigFile {
    pub scenario: ScenarioSection,
    pub pilot: PilotSection,
    pub design: DesignSection,
}

impl CliConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn numerology(&self) -> NumerologyConfig {
        NumerologyConfig {
            sampling_frequency_hz: self.scenario.sampling_frequency_hz,
            fft_size: self.scenario.fft_size,
            subcarrier_spacing_hz: self.scenario.subcarrier_spacing_hz,
            subcarrier_offset: self.scenario.subcarrier_offset,
        }
    }

    pub fn pilot_selection(&self) -> PilotSelection {
        match self.pilot.kind {
            PilotKind::Nr => PilotSelection::Nr {
                n_id1: self.pilot.n_id1,
                n_id2: self.pilot.n_id2,
                pss_only: self.pilot.pss_only,
            },
            PilotKind::Synthetic => PilotSelection::Synthetic {
                length: self.pilot.synthetic_length_samples,
                seed: self.pilot.synthetic_seed,
            },
        }
    }

    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let s = &self.scenario;
        let cfg = ScenarioConfig {
            numerology: self.numerology(),
            doppler_max_hz: s.doppler_max_hz,
            observation_time_s: s.observation_time_s,
            max_delay: s.max_delay_samples,
            snr_list_db: s.snr_list_db.clone(),
            trials: s.trials,
            patterns: s.patterns.clone(),
            master_seed: s.master_seed,
            pilot: self.pilot_selection(),
            snap_true_doppler: false,
            bootstrap_resamples: s.bootstrap_resamples,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn design_config(&self, period: usize, kept: usize) -> Result<DesignConfig> {
        let numerology = self.numerology();
        let pilot = self
            .pilot_selection()
            .build(&numerology)
            .map_err(|e| Error::Config(e.to_string()))?;
        let grid = make_doppler_grid(self.scenario.doppler_max_hz, self.scenario.observation_time_s)
            .map_err(|e| Error::Config(e.to_string()))?;
        let max_delay = self.design.max_delay_samples.unwrap_or(self.scenario.max_delay_samples);
        let mut cfg = DesignConfig::new(period, kept, pilot, max_delay, grid, numerology.sample_period());
        let edge = self.scenario.doppler_max_hz;
        cfg.design_dopplers = self
            .design
            .design_dopplers_hz
            .clone()
            .unwrap_or_else(|| vec![-edge, 0.0, edge]);
        cfg.enumeration_cap = self.design.enumeration_cap;
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = CliConfigFile::parse("").unwrap();
        let s = cfg.scenario().unwrap();
        assert_eq!(s, ScenarioConfig::default());
        assert_eq!(s.numerology.sampling_frequency_hz, 3.84e6);
        assert_eq!(s.trials, 5000);
        assert_eq!(s.doppler_max_hz, 20e3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(CliConfigFile::parse("[scenario]\ntrails = 3\n"), Err(Error::Config(_))));
        assert!(matches!(CliConfigFile::parse("bogus = 1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_and_inline_patterns() {
        let text = r#"
[scenario]
trials = 25
snr_list_db = [-10.0, 0.0]
max_delay_samples = 32
patterns = [{ period = 8, kept = 2, cosets = [3, 5] }]

[pilot]
kind = "synthetic"
synthetic_length_samples = 256

[design]
design_dopplers_hz = [0.0, 5000.0]
"#;
        let cfg = CliConfigFile::parse(text).unwrap();
        let s = cfg.scenario().unwrap();
        assert_eq!(s.trials, 25);
        assert_eq!(s.max_delay, 32);
        assert_eq!(s.patterns, vec![CosetPattern::new(8, vec![3, 5]).unwrap()]);
        assert_eq!(s.pilot, PilotSelection::Synthetic { length: 256, seed: 1 });
        let d = cfg.design_config(8, 2).unwrap();
        assert_eq!(d.design_dopplers, vec![0.0, 5000.0]);
        assert_eq!(d.pilot.len(), 256);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(CliConfigFile::parse("[scenario]\ntrials = 0\n").unwrap().scenario().is_err());
        assert!(CliConfigFile::parse("[scenario]\nfft_size = 128\n").unwrap().scenario().is_err());
        let bad_pattern = "[scenario]\npatterns = [{ period = 4, kept = 1, cosets = [5] }]\n";
        assert!(CliConfigFile::parse(bad_pattern).is_err());
        assert!(CliConfigFile::parse("").unwrap().design_config(4, 8).is_err());
    }
}
