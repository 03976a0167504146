use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use survey_descent_cli::{commands, log_level_from_env};

#[derive(Parser)]
#[command(
    name = "surveydesc",
    about = "Multipoint first-order minimization of nonsmooth objectives",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config file.
    Run {
        /// Path to the experiment config (see README for the schema).
        config: PathBuf,
    },
    /// Re-check a written trace against the theory bounds.
    Diagnose {
        /// Path to a trace.csv produced by `run`.
        trace: PathBuf,
        /// Objective id the trace was produced with.
        #[arg(long)]
        objective: String,
    },
    /// Cross-validate the projection solver on random instances.
    MbpFuzz {
        #[arg(long)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log_level_from_env())
        .init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => commands::cmd_run(&config),
        Command::Diagnose { trace, objective } => commands::cmd_diagnose(&trace, &objective),
        Command::MbpFuzz { cases, seed } => commands::cmd_mbp_fuzz(cases, seed),
    };
    ExitCode::from(code as u8)
}
