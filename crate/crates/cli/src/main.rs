//! `explore`: dataset generation, oracle solving, training and evaluation.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Command, Run};
use config::{EvaluateSection, RunConfig};
use error::CliError;

/// Caps the worker pool when `--jobs` is not given.
const JOBS_ENV: &str = "EXPLORE_JOBS";

#[derive(Parser)]
#[command(name = "explore", version, about = "Budgeted exploration: worlds, oracle, imitation learning")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dataset file from the [dataset] section.
    GenWorlds(Common),
    /// Run the clairvoyant oracle from the start node of every instance.
    OracleSolve(Common),
    /// Train a policy by imitating the oracle.
    Train(Common),
    /// Run episodes of a policy and write cumulative reward curves.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Overrides evaluate.policy.
        #[arg(long)]
        policy: Option<String>,
        /// Overrides evaluate.episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Root directory for outputs (default: `out` from the config, else ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to EXPLORE_JOBS, then to all cores.
    #[arg(long)]
    jobs: Option<usize>,
}

fn jobs(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(JOBS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("{JOBS_ENV} must be a positive integer, got {v:?}")))?,
            ),
            Err(_) => None,
        },
    };
    match n {
        Some(0) => Err(CliError::Config("jobs must be at least 1".into())),
        n => Ok(n),
    }
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let (command, common, policy, episodes) = match cli.command {
        Cmd::GenWorlds(c) => (Command::GenWorlds, c, None, None),
        Cmd::OracleSolve(c) => (Command::OracleSolve, c, None, None),
        Cmd::Train(c) => (Command::Train, c, None, None),
        Cmd::Evaluate {
            common,
            policy,
            episodes,
        } => (Command::Evaluate, common, policy, episodes),
    };
    if let Some(n) = jobs(common.jobs)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if policy.is_some() || episodes.is_some() {
        let e = cfg.evaluate.get_or_insert_with(EvaluateSection::default);
        if let Some(p) = policy {
            e.policy = p;
        }
        if episodes.is_some() {
            e.episodes = episodes;
        }
    }
    let out = common.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    Run::prepare(command, cfg, out)?.execute()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("bad arguments").to_string();
            let err = CliError::Config(first.trim_start_matches("error: ").to_string());
            eprintln!("{}", err.line());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
