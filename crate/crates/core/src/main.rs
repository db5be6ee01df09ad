use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use straggler_lab::experiments::{run_mode, Mode, ScenarioConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    #[value(name = "theory_sweep", alias = "theory-sweep")]
    TheorySweep,
    #[value(name = "simulate")]
    Simulate,
    #[value(name = "order_stats", alias = "order-stats")]
    OrderStats,
}

/// Planner, simulator and validation experiments for adaptive fastest-k SGD.
#[derive(Debug, Parser)]
#[command(name = "straggler-lab", version)]
struct Args {
    mode: Cmd,
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

fn run(args: Args) -> straggler_lab::Result<()> {
    if let Some(j) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| straggler_lab::Error::Config(e.to_string()))?;
    }
    let mut config = ScenarioConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let mode = match args.mode {
        Cmd::TheorySweep => Mode::TheorySweep,
        Cmd::Simulate => Mode::Simulate,
        Cmd::OrderStats => Mode::OrderStats,
    };
    for f in run_mode(mode, &config, &args.out)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
