use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cotransport_core::config::SimConfig;
use cotransport_harness::experiments::{run_exp1, run_exp2, run_faults, run_study, TrialOutcome};
use cotransport_harness::report;

/// Headless scripted experiments for the collective-transport simulator.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One object, four robots, a single goal command per trial.
    Exp1(RunArgs),
    /// Two objects, five robots, operator reassignment plus a no-reassignment control.
    Exp2(RunArgs),
    /// Interaction counts of goal commands versus per-robot waypoints.
    Study(RunArgs),
    /// Robot failures mid-push and below the minimum team size.
    Faults(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for the CSV and summary files.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Simulation config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Exp1(a) => ("exp1", a),
        Command::Exp2(a) => ("exp2", a),
        Command::Study(a) => ("study", a),
        Command::Faults(a) => ("faults", a),
    };
    let cfg = match &args.config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::default(),
    };
    let run = match cli.command {
        Command::Exp1(_) => run_exp1,
        Command::Exp2(_) => run_exp2,
        Command::Study(_) => run_study,
        Command::Faults(_) => run_faults,
    };
    let started = Instant::now();
    let outcome: TrialOutcome = run(&cfg, args.trials, args.seed)?;
    let elapsed = started.elapsed();

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let csv_path = args.out.join(format!("{name}.csv"));
    fs::write(&csv_path, report::csv_string(&outcome.records)?)?;
    let summary = report::summary_table(&outcome.records);
    fs::write(args.out.join(format!("{name}_summary.txt")), &summary)?;

    print!("{summary}");
    println!(
        "wrote {} ({:.1} s wall clock)",
        csv_path.display(),
        elapsed.as_secs_f64()
    );
    for f in &outcome.failures {
        eprintln!("FAILED: {f}");
    }
    Ok(if outcome.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
