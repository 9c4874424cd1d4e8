use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use svc_cache::config::{ExperimentConfig, SweepSpec, SweepVar, DEFAULT_TEMPLATE};
use svc_cache::experiments::{self, Report, ValidateOptions};
use svc_cache::Error;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_GATE: u8 = 3;

/// Delay model and cache placement experiments for layered video delivery.
#[derive(Parser)]
#[command(name = "svc-cache", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic vs Monte-Carlo success probabilities and delay.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Also estimate from full network realizations (not gated).
        #[arg(long)]
        realized: bool,
    },
    /// Delay over a grid of uniform caching probabilities.
    DelaySurface(Common),
    /// Optimized policy vs MPCP, EPCP and ICP over a sweep.
    Optimize(Common),
    /// Optimizer trajectories for several SIR thresholds.
    Convergence(Common),
    /// Delay breakdown and cache usage of every policy.
    Baselines(Common),
    /// Print the default configuration template.
    Template,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; the built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding sim.master_seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Monte-Carlo trials per estimate, overriding sim.trials.
    #[arg(long, value_name = "N")]
    trials: Option<usize>,
    /// Output CSV; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// VAR=start:stop:steps, overriding the config's sweep.
    #[arg(long, value_name = "VAR=START:STOP:STEPS")]
    sweep: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::from_toml_str(DEFAULT_TEMPLATE)?,
        };
        if let Some(seed) = self.seed {
            cfg.sim.master_seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.sim.trials = trials;
        }
        if let Some(s) = &self.sweep {
            cfg.sweep = Some(s.parse::<SweepSpec>()?);
        }
        if let Some(out) = &self.out {
            cfg.output.path = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<Option<(ExperimentConfig, Report)>, Error> {
    let (cfg, report) = match command {
        Command::Template => {
            print!("{DEFAULT_TEMPLATE}");
            return Ok(None);
        }
        Command::Validate { common, realized } => {
            let cfg = common.resolve()?;
            let mut opts = ValidateOptions {
                realized,
                ..ValidateOptions::default()
            };
            if let Some(s) = &cfg.sweep {
                opts = opts.with_sweep(s)?;
            }
            let r = experiments::validate_probabilities(&cfg, &opts)?;
            (cfg, r)
        }
        Command::DelaySurface(common) => {
            let mut cfg = common.resolve()?;
            let axis = *cfg
                .sweep
                .get_or_insert_with(experiments::default_surface_axis);
            let r = experiments::delay_surface(&cfg, &axis)?;
            (cfg, r)
        }
        Command::Optimize(common) => {
            let mut cfg = common.resolve()?;
            let sweep = *cfg
                .sweep
                .get_or_insert_with(experiments::default_optimize_sweep);
            let r = experiments::optimize_and_compare(&cfg, &sweep)?;
            (cfg, r)
        }
        Command::Convergence(common) => {
            let mut cfg = common.resolve()?;
            let sweep = *cfg
                .sweep
                .get_or_insert_with(experiments::default_convergence_sweep);
            if sweep.variable != SweepVar::ThetaDb {
                return Err(Error::Config(format!(
                    "convergence sweeps `theta_db`, not `{}`",
                    sweep.variable
                )));
            }
            let r = experiments::convergence(&cfg, &sweep.values())?;
            (cfg, r)
        }
        Command::Baselines(common) => {
            let cfg = common.resolve()?;
            if cfg.sweep.is_some() {
                return Err(Error::Config("baselines does not take a sweep".into()));
            }
            let r = experiments::baselines(&cfg)?;
            (cfg, r)
        }
    };
    Ok(Some((cfg, report)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cfg, report) = match run(cli.command) {
        Ok(Some(done)) => done,
        Ok(None) => return ExitCode::SUCCESS,
        Err(e @ (Error::Config(_) | Error::Parse(_))) => {
            eprintln!("svc-cache: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("svc-cache: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let csv = report.to_csv(&cfg);
    match &cfg.output.path {
        Some(path) => {
            if let Err(e) = std::fs::write(path, csv) {
                eprintln!("svc-cache: cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_RUNTIME);
            }
        }
        None => print!("{csv}"),
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "svc-cache: {} row(s) failed the gate",
            report.gate_failures.unwrap_or(0)
        );
        ExitCode::from(EXIT_GATE)
    }
}
