//! Configuration, runners and artifact writers behind the `becgrape` binary.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;

use std::path::{Path, PathBuf};

pub use config::RunConfig;
pub use error::CliError;
pub use runner::Outcome;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Propagate,
    Optimize,
    BetaScan,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Propagate => "propagate",
            Subcommand::Optimize => "optimize",
            Subcommand::BetaScan => "beta-scan",
        }
    }
}

/// Loads a configuration, applies overrides, runs it and writes the manifest.
pub fn execute(
    sub: Subcommand,
    config_path: &Path,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<Outcome, CliError> {
    let (mut cfg, raw) = RunConfig::load(config_path)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if let Some(seed) = seed {
        cfg.apply_seed(seed);
    }
    let mut out = output::OutputDir::create(&cfg.output_dir)?;
    let outcome = match sub {
        Subcommand::Propagate => runner::run_propagate(&cfg, &mut out)?,
        Subcommand::Optimize => runner::run_optimize(&cfg, &mut out)?,
        Subcommand::BetaScan => runner::run_beta_scan(&cfg, &mut out)?,
    };
    out.finish(output::ManifestHeader {
        tool: "becgrape",
        tool_version: env!("CARGO_PKG_VERSION"),
        core_version: becgrape::VERSION,
        subcommand: sub.name(),
        config_path: config_path.display().to_string(),
        config_sha256: output::sha256_hex(&raw),
        seed: cfg.seed(),
        os: std::env::consts::OS,
        arch: std::env::consts::ARCH,
        effective_config: serde_json::to_value(&cfg).expect("configuration serializes"),
    })?;
    Ok(outcome)
}

/// Parses and fully validates a configuration without running it.
pub fn validate(config_path: &Path) -> Result<RunConfig, CliError> {
    let (cfg, _) = RunConfig::load(config_path)?;
    cfg.prepare()?;
    Ok(cfg)
}
