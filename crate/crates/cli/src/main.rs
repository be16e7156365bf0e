use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinwig_cli::{benchmark, simulate, sweep, CliError, Overrides, RunConfig};

/// Phase-space simulation of open collective spins.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a stochastic ensemble and write observables.
    Simulate(RunArgs),
    /// Run the ensemble and the exact solver and compare them.
    Benchmark(RunArgs),
    /// Scan one model parameter and record window-averaged steady states.
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `integrator.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `integrator.n_workers` (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides `outputs`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        let overrides = Overrides { seed: self.seed, workers: self.workers, out: self.out.clone() };
        Ok(RunConfig::load(&self.config)?.apply(&overrides))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            let config = args.config()?;
            let outcome = simulate(&config)?;
            let d = &outcome.diagnostics;
            println!(
                "simulate: {} trajectories, {} steps of {:e}; {} clamp events, {} diverged; wrote {}",
                d.n_traj,
                d.n_steps,
                d.dt,
                d.clamp_events,
                d.diverged_trajectories,
                config.outputs.display()
            );
            outcome.verdict()
        }
        Command::Benchmark(args) => {
            let config = args.config()?;
            let outcome = benchmark(&config)?;
            for c in &outcome.report.checks {
                println!(
                    "{:<8} {}  max|Δ| = {:.4e}  scaled = {:.4e}  sigma = {:.2}",
                    c.quantity,
                    if c.pass { "PASS" } else { "FAIL" },
                    c.max_abs_deviation,
                    c.max_scaled_deviation,
                    c.max_sigma_deviation
                );
            }
            outcome.verdict()
        }
        Command::Sweep(args) => {
            let config = args.config()?;
            let outcome = sweep(&config)?;
            for p in &outcome.points {
                println!(
                    "{} = {:<8} sz = {:.4} ± {:.4}",
                    outcome.parameter,
                    p.value,
                    p.moments.value(spinwig::Obs::Sz),
                    p.moments.get(spinwig::Obs::Sz).stderr
                );
            }
            outcome.verdict()
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
