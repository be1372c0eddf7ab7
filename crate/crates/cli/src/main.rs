//! `adrank` command-line driver: convert, select features, train, evaluate,
//! simulate and run repeated experiments.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use adrank::data::Schema;
use adrank::learn::{Measure, Surrogate};
use adrank::pipeline::Ratio;
use adrank::policy::PolicyKind;
use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adrank", version, about = "AUC rankers and classifier baselines for bandit ad recommendation")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Input CSV file.
    #[arg(long, short)]
    input: PathBuf,
    /// Column layout, e.g. `full:label=last` or `bandit:action=action,reward=reward,propensity=none`.
    #[arg(long)]
    schema: Option<Schema>,
    /// Number of arms (bandit data; default is the largest action plus one).
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct TrainArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: Option<PolicyKind>,
    /// `pos:neg` ratio such as 1:2, or `off`.
    #[arg(long, value_parser = parse_undersample)]
    undersample: Option<Undersample>,
    /// Comma-separated λ values.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// SGD iterations per arm.
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    surrogate: Option<Surrogate>,
    /// Measure maximized by ranker thresholds.
    #[arg(long)]
    measure: Option<Measure>,
    /// Base step size η₀.
    #[arg(long)]
    step_size: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Turn full-information data into uniformly logged bandit data.
    Convert {
        #[command(flatten)]
        data: DataArgs,
        /// Output bandit CSV.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Split first and convert only the training part.
        #[arg(long)]
        train_fraction: Option<f64>,
        /// Where to write the untouched test part when splitting.
        #[arg(long, requires = "train_fraction")]
        test_out: Option<PathBuf>,
    },
    /// Rank features by information gain and keep the top fraction.
    SelectFeatures {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.2)]
        keep_fraction: f64,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// JSON report path (printed to stdout when omitted).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Train a ranker or classifier suite on bandit data and write a policy bundle.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Experiment config supplying training settings (flags win).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Feature selection report from `select-features`.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Skip per-feature standardization.
        #[arg(long)]
        no_standardize: bool,
        /// Exploration rate stored in the bundle.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output bundle path.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// True CTR of a bundle's deterministic policy on full-information data.
    EvalFull {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, short)]
        policy: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Importance-weighted CTR and lower confidence bound on logged bandit data.
    EvalBandit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, short)]
        policy: PathBuf,
        /// Overrides the bundle's exploration rate.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Cap on importance weights (off by default).
        #[arg(long)]
        clip: Option<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Generate sparse-click bandit logs from a logistic click model.
    Simulate {
        /// Comma-separated positive rate per arm.
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        dimension: usize,
        #[arg(long, default_value_t = 100_000)]
        n_train: usize,
        #[arg(long, default_value_t = 20_000)]
        n_test: usize,
        #[arg(long, default_value_t = 1.0)]
        weight_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for train.csv, test.csv and model.json.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Repeated split/convert/train/evaluate runs with a summary report.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset path (overrides the config).
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long)]
        schema: Option<Schema>,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
        /// Policy kinds to compare, comma-separated.
        #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
        kinds: Option<Vec<PolicyKind>>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        train_fraction: Option<f64>,
        /// Re-draw the train/test split every repetition.
        #[arg(long)]
        resplit: bool,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> Result<PolicyKind, String> {
    s.parse::<PolicyKind>().map_err(|e| e.to_string())
}

/// Parsed `--undersample` value; `None` inside means `off`.
#[derive(Clone, Copy)]
struct Undersample(Option<Ratio>);

fn parse_undersample(s: &str) -> Result<Undersample, String> {
    adrank::experiment::parse_undersample(s).map(Undersample)
}

/// Failures split by exit code: bad invocation (2) or runtime trouble (1).
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
