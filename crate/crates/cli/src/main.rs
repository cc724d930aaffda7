//! `cordmetrics`: simulate, fit, aggregate, calibrate and classify.

mod commands;
mod run;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{aggregate, fit, repro, simulate};

#[derive(Debug, Parser)]
#[command(name = "cordmetrics", version, about = "Spinal cord diffusion microstructure pipeline")]
struct Cli {
    /// Worker threads for voxel-parallel work (default: all cores). Output does not depend on it.
    #[arg(long, global = true, env = "CORDMETRICS_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cord phantom, or a control/patient cohort of them.
    Simulate(simulate::SimulateArgs),
    /// Fit DTI and/or ball-and-stick voxel-wise and write parameter and metric maps.
    Fit(fit::FitArgs),
    /// Average metric maps per vertebral level (plus C1C7/C3C5 pooled rows).
    Aggregate(aggregate::AggregateArgs),
    /// Calibrate Bland-Altman limits of agreement on control scan/rescan tables.
    BlandAltman(repro::BlandAltmanArgs),
    /// Classify patient M12 − M0 differences against control limits.
    Classify(repro::ClassifyArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Aggregate(a) => aggregate::run(a),
        Command::BlandAltman(a) => repro::run_bland_altman(a),
        Command::Classify(a) => repro::run_classify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
