//! `mdp-forge` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mdp-forge", version, about = "Generate, run and sweep toy MDPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Pgm,
    Png,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentArg {
    QLearning,
    Sarsa,
    DoubleQ,
    FixedAction,
    Random,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file (env config, env dump or sweep grid, per subcommand).
    #[arg(long)]
    pub config: PathBuf,
    /// Seed override. Falls back to the config's seed, then MDP_FORGE_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a config, env dump or sweep grid and print its defaulted form.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Write the result to this directory instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate an environment and write its JSON dump.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate one agent on one environment.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long, value_enum, default_value = "q-learning")]
        agent: AgentArg,
        /// Training steps.
        #[arg(long, default_value_t = mdp_forge::harness::DEFAULT_TOTAL_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = mdp_forge::harness::DEFAULT_EVAL_INTERVAL)]
        eval_interval: usize,
        #[arg(long, default_value_t = mdp_forge::harness::DEFAULT_EVAL_EPISODES)]
        eval_episodes: usize,
    },
    /// Run a sweep grid across seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Worker threads; defaults to the available cores.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Recompute summary statistics from a records CSV.
    Analyze {
        /// Records CSV written by `run` or `sweep`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Render an observation image.
    Render {
        #[command(flatten)]
        common: Common,
        /// Discrete state to draw.
        #[arg(long)]
        state: Option<usize>,
        /// Sample the config's image transforms instead of the identity.
        #[arg(long)]
        transformed: bool,
        /// Output file; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
