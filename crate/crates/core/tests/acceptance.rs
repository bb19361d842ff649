//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.

use std::time::Instant;

use clap::Parser;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coset_acq::cli::{run, Cli};
use coset_acq::config::CliConfigFile;
use coset_acq::correlator::{full_correlate, glrt_peak, make_doppler_grid, reduced_correlate, DopplerGrid, SearchGrid};
use coset_acq::design::{design_cosets, CosetDesigner};
use coset_acq::harness::{format_mta_table, run_campaign, CampaignReport, PreparedScenario, ScenarioConfig};
use coset_acq::multicoset::{subsample, CosetPattern, PatternFile, SamplingMask};
use coset_acq::pilot::generate_synthetic_pilot;
use coset_acq::signal::{synthesize_received, SynthesisParams};

const TRIALS: usize = 500;

/// (L, K, selected cosets) of the reference comparison table.
const TABLE: [(usize, usize, &[usize]); 5] = [
    (8, 4, &[2, 3, 4, 5]),
    (16, 8, &[2, 3, 4, 5, 10, 11, 12, 13]),
    (8, 2, &[3, 5]),
    (16, 1, &[12]),
    (32, 1, &[12]),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn table_patterns() -> Vec<CosetPattern> {
    TABLE.iter().map(|(l, _, c)| CosetPattern::new(*l, c.to_vec()).unwrap()).collect()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let ns = rng.random_range(8..200);
        let pilot = generate_synthetic_pilot(ns, rng.random()).unwrap();
        let max_delay = rng.random_range(0..40);
        let ts = 1.0 / rng.random_range(1e5..4e6);
        let width = rng.random_range(50.0..2000.0);
        let doppler = DopplerGrid::symmetric(width * rng.random_range(1..12) as f64, width).unwrap();
        let grid = SearchGrid::new(max_delay, doppler, ts).unwrap();
        let n_obs = ns + max_delay + rng.random_range(0..8);
        let r: Vec<Complex64> = (0..n_obs)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let reduced = reduced_correlate(&r, &SamplingMask::all_ones(n_obs), &pilot, &grid).unwrap();
        let full = full_correlate(&r, &pilot, &grid).unwrap();
        for d in 0..grid.n_delays() {
            for i in 0..grid.n_bins() {
                let (a, b) = (reduced.metric(d, i), full.metric(d, i));
                let rel = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
            }
        }
    }
    outcome(worst <= 1e-10, format!("100 instances, worst relative deviation {worst:.3e} (tol 1e-10)"))
}

fn noiseless_exactness() -> Outcome {
    let cfg = ScenarioConfig::default();
    let prepared = PreparedScenario::new(&cfg).unwrap();
    let bins = prepared.grid.doppler.bins().to_vec();
    let width = prepared.grid.doppler.bin_width();
    let mut plans = vec![prepared.plan(&CosetPattern::uniform()).unwrap()];
    plans.extend(table_patterns().iter().map(|p| prepared.plan(p).unwrap()));
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let d0 = rng.random_range(0..=cfg.max_delay);
        let nu0 = bins[rng.random_range(0..bins.len())];
        let params = SynthesisParams::noiseless(d0, nu0, prepared.grid.sample_period);
        let r = synthesize_received(&prepared.pilot, &params, prepared.n_obs).unwrap();
        for (k, plan) in plans.iter().enumerate() {
            let y = subsample(&r, &plan.mask).unwrap();
            let est = glrt_peak(&plan.correlator.correlate_compressed(&y).unwrap()).unwrap();
            let ok = if k == 0 {
                est.delay == d0 && est.doppler_hz == nu0
            } else {
                est.delay == d0 && (est.doppler_hz - nu0).abs() <= width * (1.0 + 1e-9)
            };
            if !ok {
                failures.push(format!("{} at ({d0}, {nu0}) -> ({}, {})", plan.pattern.id(), est.delay, est.doppler_hz));
            }
        }
    }
    if failures.is_empty() {
        outcome(true, "50 on-grid targets: uniform exact; every reference pattern delay exact, Doppler within one bin")
    } else {
        outcome(false, format!("{} misses, first: {}", failures.len(), failures[0]))
    }
}

fn doppler_grid_rule() -> Outcome {
    let g = make_doppler_grid(20e3, 1e-3).unwrap();
    let pass = (g.bin_width() - 443.0).abs() <= 0.5 && g.len() == 91;
    outcome(pass, format!("bin width {} Hz (443 +/- 0.5), {} bins (91)", g.bin_width(), g.len()))
}

fn complexity_gain(report: &CampaignReport) -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut by_ratio: Vec<(f64, f64)> = Vec::new();
    for &(l, k, cosets) in &TABLE {
        let p = report.pattern(&CosetPattern::new(l, cosets.to_vec()).unwrap()).unwrap();
        let target = l as f64 / k as f64;
        let mac_ok = (p.mac_gain / target - 1.0).abs() <= 0.02;
        let wall_ok = p.wallclock_gain >= 0.5 * target;
        pass &= mac_ok && wall_ok;
        lines.push(format!(
            "{l}/{k}: MAC gain {:.3} (L/K {target}, {}), wall-clock {:.2}x (>= {:.1}, {})",
            p.mac_gain,
            if mac_ok { "ok" } else { "off" },
            p.wallclock_gain,
            0.5 * target,
            if wall_ok { "ok" } else { "low" }
        ));
        by_ratio.push((target, p.wallclock_gain));
    }
    by_ratio.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Equal L/K form a tie group; gains must not decrease across groups.
    let mut monotone = true;
    for i in 0..by_ratio.len() {
        for j in 0..by_ratio.len() {
            if by_ratio[i].0 < by_ratio[j].0 && by_ratio[i].1 > by_ratio[j].1 {
                monotone = false;
            }
        }
    }
    pass &= monotone;
    lines.push(format!("wall-clock gain monotone in L/K: {monotone}"));
    outcome(pass, lines.join("; "))
}

fn design_reproduction() -> Outcome {
    let defaults = CliConfigFile::default();
    let mut pass = true;
    let mut lines = Vec::new();
    for &(l, k, cosets) in &TABLE {
        let start = Instant::now();
        let cfg = defaults.design_config(l, k).unwrap();
        let ranked = design_cosets(&cfg).unwrap();
        let reference = CosetPattern::new(l, cosets.to_vec()).unwrap();
        let j_ref = CosetDesigner::new(&cfg).unwrap().score(&reference).unwrap().cost;
        let best = &ranked[0];
        let rank = ranked.iter().position(|r| r.pattern == reference).unwrap() + 1;
        let ok = best.score.cost <= j_ref;
        pass &= ok;
        lines.push(format!(
            "{l}/{k}: C* {:?} J {:.6} vs {:?} J {:.6} (rank {rank}/{}), equal: {} [{:.1}s]",
            best.pattern.cosets(),
            best.score.cost,
            cosets,
            j_ref,
            ranked.len(),
            if best.pattern == reference { "yes" } else { "no" },
            start.elapsed().as_secs_f64()
        ));
    }
    outcome(pass, lines.join("; "))
}

fn rmse_behaviour(report: &CampaignReport) -> Outcome {
    let cfg = &report.config;
    let lo = cfg.snr_list_db.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cfg.snr_list_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let df = report.doppler_bin_width_hz;
    let uniform = CosetPattern::uniform();
    let mut problems = Vec::new();

    let u_hi = report.cell(&uniform, hi).unwrap();
    let a = u_hi.delay_rmse <= 1.0 && (0.15 * df..=df).contains(&u_hi.doppler_rmse);
    if !a {
        problems.push(format!("(a) uniform at {hi} dB: delay {} doppler {}", u_hi.delay_rmse, u_hi.doppler_rmse));
    }

    let mut patterns = vec![uniform.clone()];
    patterns.extend(table_patterns());
    for p in &patterns {
        let (h, l) = (report.cell(p, hi).unwrap(), report.cell(p, lo).unwrap());
        if h.delay_rmse > l.delay_rmse || h.doppler_rmse > l.doppler_rmse {
            problems.push(format!(
                "(b) {}: delay {} -> {}, doppler {} -> {}",
                p.id(),
                l.delay_rmse,
                h.delay_rmse,
                l.doppler_rmse,
                h.doppler_rmse
            ));
        }
    }

    for &snr in &cfg.snr_list_db {
        let u = report.cell(&uniform, snr).unwrap();
        for p in table_patterns() {
            let c = report.cell(&p, snr).unwrap();
            if u.delay_ci[0] > c.delay_ci[1] {
                problems.push(format!(
                    "(c) {} at {snr} dB: uniform {} [{}, {}] vs {} [{}, {}]",
                    p.id(),
                    u.delay_rmse,
                    u.delay_ci[0],
                    u.delay_ci[1],
                    c.delay_rmse,
                    c.delay_ci[0],
                    c.delay_ci[1]
                ));
            }
        }
    }

    let summary = format!(
        "{} trials/cell, {} SNRs; uniform at {hi} dB: delay RMSE {:.3}, Doppler RMSE {:.1} Hz ({:.3} bins)",
        cfg.trials,
        cfg.snr_list_db.len(),
        u_hi.delay_rmse,
        u_hi.doppler_rmse,
        u_hi.doppler_rmse / df
    );
    if problems.is_empty() {
        outcome(true, summary)
    } else {
        outcome(false, format!("{summary}; {}", problems.join("; ")))
    }
}

fn strip_timing(path: &std::path::Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    if !path.ends_with("mta.csv") {
        return text;
    }
    text.lines()
        .map(|l| {
            if l.starts_with('#') {
                return l.to_string();
            }
            let mut cols: Vec<&str> = l.split(',').collect();
            if cols.len() == 6 {
                cols.drain(2..4);
            }
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut args = Vec::new();
    for (i, p) in table_patterns().iter().enumerate().take(3) {
        let path = dir.path().join(format!("p{i}.json"));
        PatternFile::bare(p).save(&path).unwrap();
        args.push(path);
    }
    let mut outputs = Vec::new();
    for (run_idx, workers) in [(0, "1"), (1, "2")] {
        let out_dir = dir.path().join(format!("run{run_idx}"));
        let mut argv: Vec<String> = ["coset-acq", "--workers", workers, "--seed", "7", "evaluate", "--trials", "40", "--snr=-15,-5,5"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for p in &args {
            argv.push("--pattern".into());
            argv.push(p.to_str().unwrap().into());
        }
        argv.push("--output".into());
        argv.push(out_dir.to_str().unwrap().into());
        let cli = Cli::try_parse_from(&argv).unwrap();
        if let Err(e) = run(&cli, &mut std::io::sink()) {
            return outcome(false, format!("evaluate failed: {e}"));
        }
        outputs.push(out_dir);
    }
    let mut differing = Vec::new();
    for f in ["rmse.csv", "mta.csv", "fig-delay.dat", "fig-doppler.dat"] {
        if strip_timing(&outputs[0].join(f)) != strip_timing(&outputs[1].join(f)) {
            differing.push(f);
        }
    }
    if differing.is_empty() {
        outcome(true, "two evaluate runs (1 and 2 workers) byte-identical outside mta_ms/wallclock_gain")
    } else {
        outcome(false, format!("differing files: {differing:?}"))
    }
}

fn design_invariants() -> Outcome {
    let defaults = CliConfigFile::default();
    let cfg = defaults.design_config(8, 4).unwrap();
    let base = design_cosets(&cfg).unwrap();
    let mut worst = 0.0f64;
    for gamma in [0.5, 2.0] {
        let mut scaled = cfg.clone();
        scaled.pilot = cfg.pilot.scaled(gamma).unwrap();
        let designer = CosetDesigner::new(&scaled).unwrap();
        for r in &base {
            let j = designer.score(&r.pattern).unwrap().cost;
            worst = worst.max((j - r.score.cost).abs() / r.score.cost.abs());
        }
    }
    let mut balances = Vec::new();
    for l in [1, 4, 8, 16] {
        let cfg = defaults.design_config(l, l).unwrap();
        balances.push(design_cosets(&cfg).unwrap()[0].score.mean_balance);
    }
    let full_ok = balances.iter().all(|&b| b == 1.0);
    outcome(
        worst <= 1e-9 && full_ok,
        format!("gamma in {{0.5, 2}}: worst relative J change {worst:.3e} (tol 1e-9); K = L balance {balances:?}"),
    )
}

fn campaign() -> CampaignReport {
    let cfg = ScenarioConfig {
        trials: TRIALS,
        patterns: table_patterns(),
        ..ScenarioConfig::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| run_campaign(&cfg)).unwrap()
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report_line = |name: &'static str, o: Outcome| {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };

    report_line("1 oracle equivalence", oracle_equivalence());
    report_line("2 noiseless exactness", noiseless_exactness());
    report_line("3 doppler grid rule", doppler_grid_rule());

    let start = Instant::now();
    let report = campaign();
    println!(
        "campaign: {} trials x {} SNRs x {} patterns in {:.1}s, 1 worker",
        TRIALS,
        report.config.snr_list_db.len(),
        report.patterns.len(),
        start.elapsed().as_secs_f64()
    );
    print!("{}", format_mta_table(&report));
    println!("reference wall-clock gains: 8/4 2.8x, 16/8 3.1x, 8/2 6.9x, 16/1 15.3x, 32/1 34.2x");
    report_line("4 complexity gain", complexity_gain(&report));
    report_line("5 coset design", design_reproduction());
    report_line("6 rmse behaviour", rmse_behaviour(&report));
    report_line("7 determinism", determinism());
    report_line("8 design invariants", design_invariants());

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
