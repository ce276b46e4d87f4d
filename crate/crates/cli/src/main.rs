use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use recover_cli::config::ExperimentConfig;
use recover_cli::experiment::run_experiment;

/// Sparse Bayesian signal and image recovery experiment runner.
#[derive(Parser, Debug)]
#[command(name = "recover", version, about)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV/PGM artifacts and the summary.
    #[arg(long)]
    out: PathBuf,
    /// Print per-cell progress.
    #[arg(long, short)]
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match ExperimentConfig::from_path(&cli.config) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("config error: {err:#}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&cfg, &cli.out, cli.verbose) {
        Ok(entries) => {
            for e in &entries {
                println!(
                    "{} {} {}: mean_abs={:.6e}{}",
                    e.label,
                    e.prior,
                    e.mode.as_str(),
                    e.mean_abs,
                    if e.converged { "" } else { " (not converged)" }
                );
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
