use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rmab", version, about = "Restless-bandit planning, training and trial simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every command that reads a config file.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config file.
    #[arg(short, long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Overrides one config value, e.g. `--set train.epochs=50`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Directory for outputs and the run manifest.
    #[arg(short, long, value_name = "DIR", env = "RMAB_OUT_DIR", default_value = "rmab-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainMode {
    Ts,
    Dfl,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Ts => "ts",
            TrainMode::Dfl => "dfl",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "ts" => Some(TrainMode::Ts),
            "dfl" => Some(TrainMode::Dfl),
            _ => None,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort and log a behavior-policy rollout.
    Generate(RunArgs),
    /// Fit a transition predictor by likelihood (ts) or decision focus (dfl).
    Train {
        #[arg(value_enum)]
        mode: TrainMode,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Rank a cohort by Whittle index and write the week's intervention list.
    Plan(RunArgs),
    /// Simulate a randomized trial and write its report and weekly series.
    Trial(RunArgs),
    /// Render a trial summary as markdown.
    Report(RunArgs),
    /// Re-run a command from its manifest and check the outputs match.
    Replay {
        /// Manifest written by an earlier run.
        manifest: PathBuf,
        /// Directory for the replayed outputs.
        #[arg(short, long, value_name = "DIR", env = "RMAB_OUT_DIR", default_value = "rmab-replay")]
        out: PathBuf,
    },
}
