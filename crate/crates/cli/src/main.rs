//! Command-line front end: exponent schedules, the integrability recursion,
//! solves, ε-sweeps, inequality checks and refinement studies.
//!
//! Exit codes: 0 all passed, 1 some check failed, 2 configuration or
//! validation error, 3 solver or recursion non-convergence.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "orthoreg",
    about = "Solvers and estimate verification for orthotropic variational problems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration file (solve/sweep/verify/study).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory override (defaults to the config's `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Write (h, constant) plot columns for every study.
    #[arg(long, global = true)]
    emit_plot_data: bool,

    /// Seed override for generated boundary data.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for independent solves (defaults to the number of
    /// CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the q-sequence and (for N >= 3) the full exponent schedule.
    Exponents {
        /// Growth exponents, comma separated: 2 <= p1 <= … <= pN.
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        /// Target integrability order (>= 2).
        #[arg(long, default_value_t = 2.0)]
        q0: f64,
        /// Truncation index for the schedule and its product.
        #[arg(long, default_value_t = 40)]
        jmax: usize,
    },
    /// Run the integrability exponent recursion to its fixpoint.
    Beta {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        q0: f64,
        /// Outer downward-induction index, 2 <= j <= N.
        #[arg(long)]
        j: usize,
        #[arg(long, default_value_t = 10_000)]
        max_levels: usize,
    },
    /// Solve the regularized problem at the finest configured resolution.
    Solve,
    /// Solve across the configured decreasing ε list and tabulate
    /// convergence.
    Sweep,
    /// Run the configured inequality checks on one solved instance.
    Verify,
    /// Run the configured checks as refinement studies over nested grids.
    Study,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("this command needs --config PATH"))?;
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut cfg = ExperimentConfig::load(&text)?;
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    match &cli.command {
        Command::Exponents { p, q0, jmax } => {
            commands::cmd_exponents(p.clone(), *q0, *jmax, cli.out.clone())
        }
        Command::Beta {
            p,
            q0,
            j,
            max_levels,
        } => commands::cmd_beta(p.clone(), *q0, *j, *max_levels, cli.out.clone()),
        Command::Solve => commands::cmd_solve(&load_config(&cli)?, cli.seed),
        Command::Sweep => commands::cmd_sweep(&load_config(&cli)?, cli.seed),
        Command::Verify => commands::cmd_verify(&load_config(&cli)?, cli.seed),
        Command::Study => commands::cmd_study(&load_config(&cli)?, cli.seed, cli.emit_plot_data),
    }
}

fn classify(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<orthoreg_core::Error>() {
        Some(orthoreg_core::Error::NonConvergence { .. })
        | Some(orthoreg_core::Error::NotStabilized { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
