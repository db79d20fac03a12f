mod check;
mod decompose;
mod error;
mod output;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stldec::sim::RunOptions;
use stldec::synthesis::TimingMode;

use crate::error::CliError;

/// Decompose multi-agent STL tasks into local sub-team tasks and check them.
#[derive(Debug, Parser)]
#[command(name = "stldec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Timing {
    Point,
    Interval,
}

impl From<Timing> for TimingMode {
    fn from(t: Timing) -> Self {
        match t {
            Timing::Point => TimingMode::PointEventually,
            Timing::Interval => TimingMode::IntervalAlways,
        }
    }
}

#[derive(Debug, clap::Args)]
struct PipelineArgs {
    /// Timing rule for eventually conjuncts (defaults to the scenario's).
    #[arg(long, value_enum)]
    timing: Option<Timing>,
    /// Radius shrinkage applied to every local cube (defaults to the scenario's).
    #[arg(long)]
    margin: Option<f64>,
    /// Cross-check each decomposition against the grid oracle when it has at
    /// most 6 decision variables.
    #[arg(long)]
    oracle: bool,
}

impl PipelineArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            mode: self.timing.map(TimingMode::from),
            margin: self.margin,
            oracle: self.oracle,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the decomposition and write the local tasks as JSON.
    Decompose {
        #[arg(long)]
        scenario: PathBuf,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Evaluate local and global robustness of a trajectory CSV.
    Check {
        /// Local-task JSON written by `decompose`.
        #[arg(long)]
        tasks: PathBuf,
        /// CSV with columns `t, x1, ..., xn` (global state, agents in scenario order).
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Run the full pipeline, or a randomized soundness campaign with `--fuzz`.
    Simulate {
        #[arg(long, required_unless_present = "fuzz")]
        scenario: Option<PathBuf>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Seed for randomized runs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run N random scenarios instead of a scenario file.
        #[arg(long, value_name = "N")]
        fuzz: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Decompose {
            scenario,
            out,
            pipeline,
        } => decompose::run(&scenario, &out, &pipeline.options()),
        Command::Check { tasks, trajectory } => check::run(&tasks, &trajectory),
        Command::Simulate {
            scenario,
            out,
            pipeline,
            seed,
            fuzz,
        } => match fuzz {
            Some(n) => simulate::fuzz(n, seed, &out),
            None => simulate::run(
                &scenario.expect("clap requires --scenario without --fuzz"),
                &out,
                &pipeline.options(),
            ),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STLDEC_LOG", "warn")).init();
    // clap would exit with 2 on bad usage, which means "infeasible" here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(error::EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
