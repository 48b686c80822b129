use std::path::PathBuf;
use std::process::ExitCode;

use becgrape_cli::{execute, validate, Outcome, Subcommand};
use clap::{Args, Parser};

/// Optimal phase control of a condensate in 1D and 2D optical lattices.
#[derive(Parser)]
#[command(name = "becgrape", version)]
enum Cli {
    /// Propagate the initial state under the configured control.
    Propagate(RunArgs),
    /// Optimize the control toward the configured target.
    Optimize(RunArgs),
    /// Evaluate one pulse over a grid of nonlinearities.
    BetaScan(RunArgs),
    /// Check a configuration without running it.
    ValidateConfig { config: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON).
    config: PathBuf,
    /// Overrides `output_dir` from the configuration.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides the seed of the random initialization.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (sub, args) = match Cli::parse() {
        Cli::Propagate(a) => (Subcommand::Propagate, a),
        Cli::Optimize(a) => (Subcommand::Optimize, a),
        Cli::BetaScan(a) => (Subcommand::BetaScan, a),
        Cli::ValidateConfig { config } => {
            return match validate(&config) {
                Ok(cfg) => {
                    println!("{}: valid {} configuration", config.display(), cfg.family_name());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    e.exit_code()
                }
            };
        }
    };
    match execute(sub, &args.config, args.output_dir, args.seed) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::BelowGoal) => {
            eprintln!("optimization finished below the fidelity goal");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("{}: {e}", args.config.display());
            e.exit_code()
        }
    }
}
