//! `infodemic`: simulate and analyse coupled news/epidemic dynamics.
//!
//! Exit status: 0 on success, 2 for configuration or input errors, 3 when a
//! computation fails numerically.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "infodemic", version, about = "Coupled news propagation and SIRS epidemic toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stochastic news iterate next to its mean-field ODE.
    SimulateNews(Common),
    /// Consolidated epidemic ODE under the configured scenario.
    Simulate(Common),
    /// Two-timescale run: stochastic news driving Euler epidemic steps.
    Hybrid(Common),
    /// Equilibria and asymptotic regime of the consolidated ODE.
    Analyze(Common),
    /// Fit a piecewise-constant influence schedule to a `t,value` series.
    Fit(FitArgs),
    /// News limit cycle for each listed attractiveness.
    LimitCycle(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV (stdout when omitted). A manifest is written alongside.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for seed and parameter sweeps.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Observed series with header `t,value`.
    #[arg(long)]
    history: PathBuf,
}

fn context(common: &Common, history: Option<PathBuf>) -> Result<Context, CliError> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_path = Some(out.clone());
    }
    config.validate()?;
    Ok(Context {
        config,
        jobs: common.jobs,
        history,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SimulateNews(c) => commands::simulate_news(&context(&c, None)?),
        Command::Simulate(c) => commands::simulate(&context(&c, None)?),
        Command::Hybrid(c) => commands::hybrid(&context(&c, None)?),
        Command::Analyze(c) => commands::analyze_cmd(&context(&c, None)?),
        Command::Fit(f) => commands::fit(&context(&f.common, Some(f.history))?),
        Command::LimitCycle(c) => commands::limit_cycle_cmd(&context(&c, None)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
