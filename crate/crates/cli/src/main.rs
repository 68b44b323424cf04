use std::path::PathBuf;

use clap::{Parser, Subcommand};
use hte_cli::commands::{cmd_bench, cmd_diagnose, cmd_fit, BenchArgs, DiagnoseArgs, FitArgs};

/// Heterogeneous treatment effect benchmarks and fits.
#[derive(Parser)]
#[command(name = "hte-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo √PEHE benchmark; writes summary.csv, replications.csv and report.md.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Replications; overrides `b` in the config.
        #[arg(long)]
        b: Option<usize>,
        /// Master seed; overrides `seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads. Falls back to the config, then HTE_LAB_JOBS, then the core count.
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fits every configured model on a CSV; writes cate_estimates.csv and comparison.csv.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Propensity overlap report for a CSV.
    Diagnose {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        treatment: String,
        /// Outcome column, left out of the propensity model.
        #[arg(long)]
        outcome: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() {
    let code = match Cli::parse().command {
        Command::Bench { config, b, seed, jobs, out } => cmd_bench(&BenchArgs { config, b, seed, jobs, out }),
        Command::Fit { config, data, seed, out } => cmd_fit(&FitArgs { config, data, seed, out }),
        Command::Diagnose { data, treatment, outcome, seed, out } => {
            cmd_diagnose(&DiagnoseArgs { data, treatment, outcome, seed, out })
        }
    };
    std::process::exit(code);
}
