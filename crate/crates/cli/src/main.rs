use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trajinf_cli::commands;
use trajinf_cli::errors::CliResult;
use trajinf_cli::load_config;

/// Trajectory-level influence scores for identification-to-LQR pipelines:
/// dataset generation, influence reports, retraining ground truth,
/// evaluation tables, and parameter ablations.
#[derive(Parser)]
#[command(name = "trajinf", version, about)]
struct Cli {
    /// Size of the worker thread pool (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (flat key = value).
    #[arg(long)]
    config: PathBuf,
    /// Output file path (written atomically).
    #[arg(long)]
    out: PathBuf,
    /// Seed override for data-generating commands.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the configured system family and write a dataset file.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Compute per-trajectory influence scores for a dataset.
    Influence {
        #[command(flatten)]
        common: Common,
        /// Dataset file produced by `generate`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the exact leave-one-out retraining sweep (ground truth).
    Loto {
        #[command(flatten)]
        common: Common,
        /// Dataset file produced by `generate`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Grade an influence report against retraining ground truth.
    Evaluate {
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Report file produced by `influence`.
        #[arg(long)]
        report: PathBuf,
        /// Ground-truth file produced by `loto`.
        #[arg(long)]
        truth: PathBuf,
        /// Accepted for interface uniformity; evaluation needs no config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Accepted for interface uniformity; evaluation uses no RNG.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the configured parameter sweep and write a long-format CSV.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        // Ignore the error if a pool already exists (e.g. repeated calls
        // under a test harness); results do not depend on thread count.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.cmd {
        Cmd::Generate { common } => {
            let cfg = load_config(&common.config)?;
            commands::cmd_generate(&cfg, &common.out, common.seed)
        }
        Cmd::Influence { common, data } => {
            let cfg = load_config(&common.config)?;
            commands::cmd_influence(&cfg, &data, &common.out)
        }
        Cmd::Loto { common, data } => {
            let cfg = load_config(&common.config)?;
            commands::cmd_loto(&cfg, &data, &common.out)
        }
        Cmd::Evaluate {
            out,
            report,
            truth,
            config,
            seed: _,
        } => {
            if let Some(path) = config {
                // Validate eagerly so a bad config fails fast here too.
                load_config(&path)?;
            }
            let table = commands::cmd_evaluate(&report, &truth, &out)?;
            print!("{table}");
            Ok(())
        }
        Cmd::Ablate { common } => {
            let cfg = load_config(&common.config)?;
            commands::cmd_ablate(&cfg, &common.out, common.seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
