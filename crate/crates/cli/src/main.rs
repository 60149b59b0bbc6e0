//! `cip`: dataset generation, training, sweeps, γ search, evaluation and
//! graph queries.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit code for usage, schema and input errors.
pub const EXIT_USAGE: u8 = 2;
/// Exit code for failed computations (divergence, numerical trouble, I/O).
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "cip", version, about = "Counterfactually invariant prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long, short = 'c', global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set train.epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a dataset (CSV plus JSON sidecar) from a catalog model.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dgp: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one CIP model (or a baseline) on a generated dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Train this baseline instead of CIP.
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset's held-out split.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Evaluate on every row instead of the held-out split.
        #[arg(long)]
        all: bool,
        /// γ recorded in the report.
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        /// Also write the report JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every γ × seed cell plus the configured baselines.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Largest grid γ whose validation loss stays within tolerance.
    GammaSearch {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Graph queries on a JSON graph file.
    Graph {
        #[command(subcommand)]
        query: commands::GraphQuery,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            cfg,
            dgp,
            n,
            seed,
            out,
        } => commands::generate(&cfg, dgp, n, seed, out),
        Command::Train {
            cfg,
            data,
            gamma,
            seed,
            baseline,
            out,
        } => commands::train(&cfg, &data, gamma, seed, baseline, &out),
        Command::Eval {
            cfg,
            model,
            data,
            all,
            gamma,
            out,
        } => commands::eval(&cfg, &model, &data, all, gamma, out.as_deref()),
        Command::Sweep { cfg, out, jobs } => commands::sweep(&cfg, out, jobs),
        Command::GammaSearch { cfg, out } => commands::gamma_search(&cfg, out),
        Command::Graph { query } => commands::graph(&query),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
