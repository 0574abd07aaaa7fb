//! Command-line runner for the robust domain adaptation laboratory.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use rda_core::harness::{self, RunConfig, SweepConfig, RESULT_HEADER};
use rda_core::io::fmt_sig;

#[derive(Parser)]
#[command(
    name = "rda",
    about = "Robust domain adaptation experiments: noisy shifted-domain pairs, \
             curriculum filtering, adversarial alignment",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config (TOML), once per seed.
    Run {
        /// Path to the run config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overwrite an existing run directory for the same config.
        #[arg(long)]
        force: bool,
    },
    /// Run a method x noise-mode x noise-level grid.
    Sweep {
        /// Path to the sweep config.
        #[arg(long)]
        config: PathBuf,
        /// Overwrite existing output directories.
        #[arg(long)]
        force: bool,
    },
    /// Rebuild result rows from a finished run directory's artifacts.
    Report {
        /// A run directory (the config-hash directory containing results.csv).
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            force,
        } => {
            let mut cfg = RunConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            let run_root = PathBuf::from(&cfg.output_dir).join(cfg.config_hash());
            let rows = harness::run_experiment(&cfg, force)?;
            println!("{RESULT_HEADER}");
            for row in &rows {
                println!("{}", row.to_csv());
            }
            eprintln!("run directory: {}", run_root.display());
            Ok(())
        }
        Command::Sweep { config, force } => {
            let cfg = SweepConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let outcome = harness::sweep(&cfg, force)?;
            println!("method,noise_mode,noise_level,seeds,mean_accuracy,sd_accuracy,error");
            for s in &outcome.summaries {
                println!(
                    "{},{},{},{},{},{},{}",
                    s.method,
                    s.noise_mode,
                    fmt_sig(s.noise_level, 6),
                    s.seeds,
                    fmt_sig(s.mean_accuracy, 6),
                    fmt_sig(s.sd_accuracy, 6),
                    s.error.replace(',', ";")
                );
            }
            eprintln!("sweep directory: {}", outcome.root.display());
            let failures = outcome
                .summaries
                .iter()
                .filter(|s| !s.error.is_empty())
                .count();
            if failures > 0 {
                anyhow::bail!("{failures} sweep cell(s) failed");
            }
            Ok(())
        }
        Command::Report { dir } => {
            let rows = harness::report(&dir)?;
            println!("{RESULT_HEADER}");
            for row in &rows {
                println!("{}", row.to_csv());
            }
            Ok(())
        }
    }
}
