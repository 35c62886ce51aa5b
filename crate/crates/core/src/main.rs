//! Command-line runner for the built-in scenarios and JSON configs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use agb_core::harness::{format_csv, load_config, registry, summarize, run_scenario_samples, HarnessError};

#[derive(Parser, Debug)]
#[command(version, about = "Antenna-group feedback simulations")]
struct Args {
    /// Built-in scenario id; `--list` prints them.
    #[arg(long)]
    scenario: Option<String>,
    /// JSON config; its values override the scenario's.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Print the registry ids and exit.
    #[arg(long)]
    list: bool,
}

fn run(args: Args) -> Result<(), HarnessError> {
    if args.list {
        for s in registry() {
            println!("{}", s.id);
        }
        return Ok(());
    }
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(HarnessError::ConfigInvalid { field: "threads".into(), message: "must be positive".into() });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::ConfigInvalid { field: "threads".into(), message: e.to_string() })?;
    }
    let mut cfg = load_config(args.scenario.as_deref(), args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let samples = run_scenario_samples(&cfg)?;
    let rows = summarize(&cfg, &samples);
    for r in rows.iter().filter(|r| r.discards > 0) {
        eprintln!("discards: scenario={} x={} method={} count={}", r.scenario, r.x, r.method, r.discards);
    }
    let csv = format_csv(&rows);
    match &args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (HarnessError::ConfigInvalid { .. } | HarnessError::UnknownScenario(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
