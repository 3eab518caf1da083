mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use kftune::Execution;

use crate::config::Config;

/// Tune Kalman filter noise intensities against chi-square consistency costs.
#[derive(Parser)]
#[command(name = "kftune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the Monte Carlo runs; 1 runs them in order.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured tuner; writes result.json and history.csv.
    Tune,
    /// Grid the cost over two parameters; writes sweep.csv.
    Sweep,
    /// Consistency report for one tuning; writes consistency.json and steps.csv.
    Check,
    /// Print the built-in benchmark systems.
    ListSystems,
}

fn load(cli: &Cli) -> Result<(Config, u64, Execution)> {
    let path = cli.config.as_ref().context("--config is required for this command")?;
    let cfg = Config::load(path)?;
    let seed = cli.seed.unwrap_or(cfg.sim.seed);
    let exec = match cli.threads {
        Some(1) => Execution::Sequential,
        Some(n) => {
            kftune::exec::configure_threads(n)?;
            Execution::Parallel
        }
        None => Execution::default(),
    };
    Ok((cfg, seed, exec))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match cli.command {
        Command::ListSystems => print!("{}", commands::list_systems()?),
        Command::Tune => {
            let (cfg, seed, exec) = load(&cli)?;
            let problem = cfg.problem(exec)?;
            let r = commands::tune(&cfg, &problem, seed)?;
            if !cli.quiet {
                println!(
                    "q* = {:?}  cost {:.6}  after {} evaluations ({:.1} s)",
                    r.q_star,
                    r.y_star,
                    r.history.len(),
                    r.timing.total_secs
                );
            }
        }
        Command::Sweep => {
            let (cfg, seed, exec) = load(&cli)?;
            let problem = cfg.problem(exec)?;
            let rows = commands::sweep(&cfg, &problem, seed)?;
            if !cli.quiet {
                println!("wrote {rows} rows to {}", cfg.output_dir.join("sweep.csv").display());
            }
        }
        Command::Check => {
            let (cfg, seed, exec) = load(&cli)?;
            let problem = cfg.problem(exec)?;
            let report = commands::check(&cfg, &problem, seed)?;
            if !cli.quiet {
                for iv in &report.intervals {
                    println!(
                        "dt {}: NIS {:?} (mean {:.3}, variance {:.3}), pass {}",
                        iv.dt, iv.nis_check.verdict, iv.eps_z_tilde, iv.s_z_tilde, iv.pass
                    );
                }
            }
        }
    }
    Ok(())
}
