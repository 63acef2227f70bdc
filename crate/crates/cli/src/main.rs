use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod audit;
mod commands;

#[derive(Parser, Debug)]
#[command(name = "fairscore", version, about = "Fairness-aware credit scoring experiments and audits")]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set preproc.di.lambda=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads for the experiment grid.
    #[arg(long, env = "FAIRSCORE_JOBS", global = true, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a config and print the effective settings.
    Validate,
    /// Run the experiment grid and write the report files.
    Run {
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fairness and profit metrics of a score file (`score,label,sensitive`).
    Audit {
        scores: PathBuf,
        /// Acceptance cutoff, or `auto` for the cost-model operating cutoff.
        #[arg(long, default_value = "auto")]
        cutoff: String,
    },
    /// Profit/separation Pareto frontier of a records file.
    Frontier {
        records: PathBuf,
        /// Write the frontier CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are fatal config errors; 2 is reserved for errored cells
            return ExitCode::from(if e.use_stderr() { commands::EXIT_FATAL } else { 0 });
        }
    };
    let code = match &cli.command {
        Command::Validate => commands::validate(&cli),
        Command::Run { out } => commands::run(&cli, out.as_deref()),
        Command::Audit { scores, cutoff } => audit::audit(&cli, scores, cutoff),
        Command::Frontier { records, out } => commands::frontier(&cli, records, out.as_deref()),
    };
    ExitCode::from(code)
}
