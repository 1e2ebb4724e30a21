use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

const DEFAULTS: &str = "\
Defaults (source in brackets):
  tightness   num_envs 200, runs_per_env 100                      [acceptance scale]
              arms 3..=10, sigma2 in (0, 0.3), Bernoulli pulls     [published experiment]
              states 1..=10, horizon 50*K*S, iid state order       [design decision]
  sr-compare  num_envs 1000, runs_per_env 100, other keys as above [acceptance scale]
              schedules uniform and reference                      [published experiment]
  regret      means [[0.9,0.3],[0.6,0.8],[0.4,0.5]], alpha 3       [design decision]
              checkpoints 100, 1000, 10000; runs 1000              [acceptance scale]
  triage      n 242 with 42 severe                                 [published data]
              costs $0.001/$0.09/$5.35, gains 1/10/100             [published parameters]
              keep 200/100/50, budget $553                         [published parameters]
              noise 0.36/0.30/0.10, round-robin policy, linear     [design decision]
              100 seeds                                            [acceptance scale]
  verify      reduced-scale versions of every property suite      [design decision]

Every run writes manifest.toml next to its outputs; pass it back with
--config to reproduce the run.";

/// Simulation experiments for bandits with state-dependent rewards, and a
/// budgeted screening pipeline.
#[derive(Debug, Parser)]
#[command(name = "sbcb", version, after_help = DEFAULTS)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed; overrides `master_seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads [default: available cores].
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Uniform allocation + EBA on random environments against the closed-form bounds.
    Tightness,
    /// Successive rejects under the uniform and reference schedules.
    SrCompare,
    /// SB-UCB pseudo-regret curve against its bound.
    Regret,
    /// Screening pipeline against the baselines.
    Triage,
    /// Runs the property suites and prints a table.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Tightness => "tightness",
            Command::SrCompare => "sr-compare",
            Command::Regret => "regret",
            Command::Triage => "triage",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}
