//! Command-line front end. `cli_main` returns the process exit code:
//! 0 on success, 1 for usage or configuration errors, 2 when a run fails.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::config::Config;
use super::output::{write_cdf, write_results, BoundColumns, ResultRow, RmseColumns};
use super::runners::{run_cdf, run_heatmap, run_power_sweep, scene_bounds, threads_from_env, HeatmapVariable};
use crate::channel::synthesize_observation;
use crate::codebooks::UnauthorizedStrategy;
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::params::StateVector;

#[derive(Debug, Parser)]
#[command(name = "risloc", version, about = "RIS-aided positioning under unauthorized-RIS interference")]
struct Cli {
    /// JSON configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true, value_enum)]
    codebook_unauth: Option<UnauthorizedStrategy>,
    /// RIS placement scenario 1, 2 or 3.
    #[arg(long, global = true)]
    scenario: Option<u8>,
    /// Worker threads; overrides RIS_SIM_THREADS. 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// CRB, MCRB, MLB and ALB of the configured scene.
    Bounds,
    /// Bounds and estimator RMSE over the configured transmit powers.
    SweepPower,
    /// ALB over a grid of UE positions.
    HeatmapUe,
    /// ALB over a grid of unauthorized RIS positions.
    HeatmapRis,
    /// Empirical CDF of the ALB over random UE positions.
    Cdf {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Noise-free estimator and matched-model bound checks.
    Selftest,
}

/// Parses `argv` (including the program name) and runs the command.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (config, threads) = match prepare(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match run(&cli, &config, threads) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn prepare(cli: &Cli) -> Result<(Config, usize)> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        config.experiment.seed = s;
    }
    if let Some(t) = cli.trials {
        config.experiment.trials = t;
    }
    if let Some(c) = cli.codebook_unauth {
        config.ris.unauth_codebook = c;
    }
    if cli.scenario.is_some() {
        config.experiment.scenario = cli.scenario;
    }
    if let Command::Cdf { samples: Some(n) } = cli.command {
        config.experiment.cdf_samples = n;
    }
    config.validate()?;
    let threads = match cli.threads {
        Some(t) => t,
        None => threads_from_env()?,
    };
    Ok((config, threads))
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: &Cli, config: &Config, threads: usize) -> Result<()> {
    let scenario = config.experiment.scenario.unwrap_or(1);
    match cli.command {
        Command::Bounds => {
            let scene = config.scene_geometry()?;
            let report = scene_bounds(config, &scene)?;
            let row = ResultRow {
                kind: "bounds",
                sweep_index: 0,
                power_dbm: config.signal.tx_power_dbm,
                strategy: config.ris.unauth_codebook,
                scenario: config.experiment.scenario.unwrap_or(0),
                ue: scene.ue,
                ris_unauth: scene.ris_u.position,
                trials: 0,
                successes: 0,
                seed: config.experiment.seed,
                bounds: BoundColumns::from_report(&report),
                rmse: RmseColumns::empty(),
            };
            write_results(sink(&cli.out)?, &[row])
        }
        Command::SweepPower => {
            let rows = run_power_sweep(config, &config.experiment.powers_dbm, threads)?;
            write_results(sink(&cli.out)?, &rows)
        }
        Command::HeatmapUe => {
            let rows = run_heatmap(config, HeatmapVariable::UePosition, scenario, threads)?;
            write_results(sink(&cli.out)?, &rows)
        }
        Command::HeatmapRis => {
            let rows = run_heatmap(config, HeatmapVariable::UnauthorizedRisPosition, scenario, threads)?;
            write_results(sink(&cli.out)?, &rows)
        }
        Command::Cdf { .. } => {
            let rows = run_cdf(config, config.experiment.cdf_samples, threads)?;
            write_cdf(sink(&cli.out)?, &rows)
        }
        Command::Selftest => selftest(config),
    }
}

/// Runs the estimator on a noise-free, interference-free observation and
/// checks that the bounds collapse to the CRB without an interferer.
pub fn selftest(config: &Config) -> Result<()> {
    let scene = config.scene_geometry()?;
    let cfg = config.signal_config()?;
    let dep = config.deployment(&scene, &cfg)?;
    let obs = synthesize_observation(&scene, &cfg, &dep, 0)?;
    let y = &obs.y_u + &obs.y_rl;
    let est = Estimator::for_scene(&scene, &cfg, &dep, config.estimator)?.estimate(&y, None)?;
    let truth = StateVector::new(scene.ue, scene.clock_offset_m);
    let pos_err = (est.fine_state.position - truth.position).norm();
    let clock_err = (est.fine_state.clock_offset_m - truth.clock_offset_m).abs();
    println!("noise-free position error {pos_err:.3e} m, clock error {clock_err:.3e} m");
    if pos_err > 1e-6 || clock_err > 1e-6 {
        return Err(Error::Optimizer(format!("noise-free estimate off by {pos_err:.3e} m")));
    }

    let mut matched = config.clone();
    matched.ris.unauth_gain_scale = 0.0;
    let r = scene_bounds(&matched, &scene)?;
    let worst = (0..r.crb.len())
        .map(|i| (r.mlb[i] / r.crb[i].powi(2) - 1.0).abs())
        .fold(0.0, f64::max);
    println!("matched model: max |MLB/CRB - 1| = {worst:.3e}, ALB = {:.3e} m", r.alb_position_m);
    if worst > 1e-3 || r.alb_position_m > 1e-6 {
        return Err(Error::Optimizer("bounds do not collapse to the CRB without interference".into()));
    }
    println!("selftest passed");
    Ok(())
}
