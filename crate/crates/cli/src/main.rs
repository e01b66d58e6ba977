//! Batch driver for the conformable Dirac-type eigenvalue problem: forward
//! spectra, nodal points, inverse nodal reconstruction, and round-trip
//! verification.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Overrides;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "confdirac", version, about = "Conformable fractional Dirac-type spectra and inverse nodal reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Cap the width of the parallel maps
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment configuration (flat sections or JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the grid resolution
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the spectrum over the configured index range
    Spectrum(RunArgs),
    /// Spectrum plus nodal points of the first eigenfunction component
    Nodes(RunArgs),
    /// Reconstruct coefficients from a nodal dataset
    Invert {
        #[command(flatten)]
        run: RunArgs,
        /// Nodal dataset (JSON) to invert
        #[arg(long)]
        nodes: PathBuf,
    },
    /// spectrum -> nodes -> invert with a verdict table
    Roundtrip(RunArgs),
    /// Run the conformable-calculus property suite
    Selftest,
}

fn load_config(path: &PathBuf) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    ExperimentConfig::parse(&text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }

    let result: anyhow::Result<i32> = (|| match &cli.command {
        Command::Spectrum(run) => {
            let cfg = load_config(&run.config)?;
            commands::cmd_spectrum(&cfg, &overrides(run))
        }
        Command::Nodes(run) => {
            let cfg = load_config(&run.config)?;
            commands::cmd_nodes(&cfg, &overrides(run))
        }
        Command::Invert { run, nodes } => {
            let cfg = load_config(&run.config)?;
            commands::cmd_invert(&cfg, &overrides(run), nodes)
        }
        Command::Roundtrip(run) => {
            let cfg = load_config(&run.config)?;
            commands::cmd_roundtrip(&cfg, &overrides(run))
        }
        Command::Selftest => commands::cmd_selftest(),
    })();

    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn overrides(run: &RunArgs) -> Overrides {
    Overrides {
        out: run.out.clone(),
        grid: run.grid,
    }
}
