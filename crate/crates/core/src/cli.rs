//! Command-line front end: `design`, `acquire` and `evaluate`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 input data
//! error, 3 enumeration cap exceeded.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use crate::config::CliConfigFile;
use crate::correlator::glrt_peak;
use crate::design::{design_cosets, DesignProvenance, DesignReport};
use crate::error::Error;
use crate::harness::{format_mta_table, run_campaign, write_campaign, PilotSelection, PreparedScenario, ScenarioConfig};
use crate::multicoset::{subsample, CosetPattern, PatternFile};
use crate::signal::{read_sample_file, snr_to_noise_variance, synthesize_received, SynthesisParams};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CAP: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "coset-acq", version, about = "Multi-coset sub-Nyquist acquisition of 5G NR synchronization signals")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank every K-of-L coset pattern and write the best one.
    Design(DesignArgs),
    /// Acquire delay and Doppler from one received signal.
    Acquire(AcquireArgs),
    /// Monte Carlo RMSE and acquisition-time campaign.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long, short = 'L')]
    pub period: usize,
    #[arg(long, short = 'K')]
    pub kept: usize,
    #[arg(long)]
    pub output: PathBuf,
    /// Design against the PSS symbol only.
    #[arg(long)]
    pub pss_only: bool,
    /// Entries kept in the report.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AcquireArgs {
    /// Pattern file; uniform sampling when omitted.
    #[arg(long)]
    pub pattern: Option<PathBuf>,
    /// Received samples, one `real,imag` pair per line.
    #[arg(long, conflicts_with = "synthesize", required_unless_present = "synthesize")]
    pub input: Option<PathBuf>,
    /// Synthesize the input: delay (samples), Doppler (Hz), SNR (dB).
    #[arg(long, num_args = 3, value_names = ["DELAY", "DOPPLER_HZ", "SNR_DB"], allow_negative_numbers = true)]
    pub synthesize: Option<Vec<String>>,
    #[arg(long)]
    pub pss_only: bool,
    /// Write the full metric surface as CSV.
    #[arg(long)]
    pub surface_dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Pattern files; the uniform benchmark is always included.
    #[arg(long, num_args = 1..)]
    pub pattern: Vec<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Comma-separated SNR values in dB.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub snr: Option<Vec<f64>>,
    #[arg(long)]
    pub pss_only: bool,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::SearchTooLarge { .. } => EXIT_CAP,
            Error::InvalidParameter(_) | Error::Config(_) | Error::Precondition(_) => EXIT_USAGE,
            Error::LengthMismatch { .. }
            | Error::Degenerate(_)
            | Error::NoValidCell
            | Error::EmptyInput(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Json(_) => EXIT_INPUT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = std::result::Result<(), CliError>;

/// Runs a parsed command line, writing the human-readable summary to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult {
    let config = match &cli.config {
        Some(path) => CliConfigFile::load(path)?,
        None => CliConfigFile::default(),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::usage("--workers must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::usage(e.to_string()))?;
    let mut buf = Vec::new();
    let result = pool.install(|| match &cli.command {
        Command::Design(args) => cmd_design(&config, cli.seed, args, &mut buf),
        Command::Acquire(args) => cmd_acquire(&config, cli.seed, args, &mut buf),
        Command::Evaluate(args) => cmd_evaluate(&config, cli.seed, args, &mut buf),
    });
    out.write_all(&buf).map_err(io_err)?;
    result
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::from(Error::Io(e))
}

fn with_pss_only(mut config: CliConfigFile, pss_only: bool) -> CliConfigFile {
    if pss_only {
        config.pilot.pss_only = true;
    }
    config
}

pub fn cmd_design(config: &CliConfigFile, _seed: Option<u64>, args: &DesignArgs, out: &mut dyn Write) -> CliResult {
    let config = with_pss_only(config.clone(), args.pss_only);
    let cfg = config.design_config(args.period, args.kept)?;
    let ranked = design_cosets(&cfg)?;
    let best = ranked.first().ok_or_else(|| CliError::input("no patterns enumerated"))?;
    if best.score.is_degenerate() {
        return Err(CliError::input(format!(
            "every {}-of-{} pattern is degenerate for this pilot; no usable design",
            args.kept, args.period
        )));
    }

    std::fs::create_dir_all(&args.output).map_err(io_err)?;
    let stem = format!("L{}-K{}", args.period, args.kept);
    let report = DesignReport::new(&cfg, &ranked, Some(args.top.unwrap_or(config.design.report_top)));
    let report_path = args.output.join(format!("design-{stem}.json"));
    report.save(&report_path)?;
    let mut file = PatternFile::bare(&best.pattern);
    file.design = Some(DesignProvenance {
        score: best.score.clone(),
        config: cfg.echo(),
    });
    let pattern_path = args.output.join(format!("pattern-{stem}.json"));
    file.save(&pattern_path)?;

    let w = |e: std::io::Error| io_err(e);
    writeln!(out, "{} patterns scored for L = {}, K = {}", ranked.len(), args.period, args.kept).map_err(w)?;
    writeln!(out, "{:>4}  {:<24} {:>12} {:>10} {:>12}", "rank", "cosets", "mean SPR", "balance", "cost").map_err(w)?;
    for (i, r) in ranked.iter().take(5).enumerate() {
        writeln!(
            out,
            "{:>4}  {:<24} {:>12.6} {:>10.6} {:>12.6}",
            i + 1,
            format!("{:?}", r.pattern.cosets()),
            r.score.mean_spr,
            r.score.mean_balance,
            r.score.cost
        )
        .map_err(w)?;
    }
    writeln!(out, "pattern: {}", pattern_path.display()).map_err(w)?;
    writeln!(out, "report:  {}", report_path.display()).map_err(w)?;
    Ok(())
}

fn load_pattern(path: &Path) -> std::result::Result<CosetPattern, CliError> {
    let file = PatternFile::load(path).map_err(|e| match e {
        Error::Io(_) | Error::Json(_) => CliError::input(format!("{}: {e}", path.display())),
        other => CliError::from(other),
    })?;
    Ok(file.pattern()?)
}

pub fn cmd_acquire(config: &CliConfigFile, seed: Option<u64>, args: &AcquireArgs, out: &mut dyn Write) -> CliResult {
    let config = with_pss_only(config.clone(), args.pss_only);
    let scenario = config.scenario()?;
    let prepared = PreparedScenario::new(&scenario)?;
    let pattern = match &args.pattern {
        Some(path) => load_pattern(path)?,
        None => CosetPattern::uniform(),
    };

    let r = if let Some(values) = &args.synthesize {
        let bad = |what: &str, v: &str| CliError::usage(format!("--synthesize {what}: cannot parse {v:?}"));
        let delay: usize = values[0].parse().map_err(|_| bad("delay", &values[0]))?;
        let doppler_hz: f64 = values[1].parse().map_err(|_| bad("Doppler", &values[1]))?;
        let snr_db: f64 = values[2].parse().map_err(|_| bad("SNR", &values[2]))?;
        if delay > scenario.max_delay {
            return Err(CliError::usage(format!(
                "delay {delay} exceeds the searched maximum {}",
                scenario.max_delay
            )));
        }
        let params = SynthesisParams {
            delay_samples: delay,
            doppler_hz,
            amplitude: Complex64::new(1.0, 0.0),
            sample_period: prepared.grid.sample_period,
            noise_variance: snr_to_noise_variance(snr_db, &prepared.pilot)?,
            rng_seed: seed.unwrap_or(scenario.master_seed),
        };
        synthesize_received(&prepared.pilot, &params, prepared.n_obs)?
    } else {
        let path = args.input.as_ref().expect("clap enforces --input or --synthesize");
        let r = read_sample_file(path)?;
        if r.len() < prepared.n_obs {
            return Err(CliError::input(format!(
                "{}: {} samples, need at least {} (pilot {} + max delay {})",
                path.display(),
                r.len(),
                prepared.n_obs,
                prepared.pilot.len(),
                scenario.max_delay
            )));
        }
        crate::signal::ComplexBuffer::new(r.as_slice()[..prepared.n_obs].to_vec())?
    };

    let plan = prepared.plan(&pattern)?;
    let y = subsample(&r, &plan.mask)?;
    let surface = plan.correlator.correlate_compressed_par(&y)?;
    let result = glrt_peak(&surface)?;
    if let Some(path) = &args.surface_dump {
        surface.write_dump(path)?;
    }

    let uniform_macs = prepared.plan(&CosetPattern::uniform())?.correlator.mac_count();
    let w = |e: std::io::Error| io_err(e);
    writeln!(out, "pattern      {} [{}]", pattern.id(), pattern.cosets_string()).map_err(w)?;
    writeln!(out, "pilot        {}", prepared.pilot.label()).map_err(w)?;
    writeln!(out, "delay        {}", result.delay).map_err(w)?;
    writeln!(out, "doppler_hz   {}", result.doppler_hz).map_err(w)?;
    writeln!(out, "peak         {:.6e}", result.peak_value).map_err(w)?;
    writeln!(out, "macs         {}", result.mac_count).map_err(w)?;
    writeln!(out, "uniform_macs {}", uniform_macs).map_err(w)?;
    Ok(())
}

pub fn cmd_evaluate(config: &CliConfigFile, seed: Option<u64>, args: &EvaluateArgs, out: &mut dyn Write) -> CliResult {
    let config = with_pss_only(config.clone(), args.pss_only);
    let mut scenario: ScenarioConfig = config.scenario()?;
    if let Some(s) = seed {
        scenario.master_seed = s;
    }
    if let Some(t) = args.trials {
        scenario.trials = t;
    }
    if let Some(snr) = &args.snr {
        scenario.snr_list_db = snr.clone();
    }
    for path in &args.pattern {
        scenario.patterns.push(load_pattern(path)?);
    }
    if scenario.patterns.is_empty() {
        return Err(CliError::usage("evaluate needs at least one --pattern file or configured pattern"));
    }
    if let PilotSelection::Nr { pss_only, .. } = &mut scenario.pilot {
        *pss_only |= args.pss_only;
    }
    scenario.validate().map_err(|e| CliError::usage(e.to_string()))?;

    let report = run_campaign(&scenario)?;
    write_campaign(&report, &args.output)?;
    let w = |e: std::io::Error| io_err(e);
    write!(out, "{}", format_mta_table(&report)).map_err(w)?;
    writeln!(out, "results written to {}", args.output.display()).map_err(w)?;
    Ok(())
}
