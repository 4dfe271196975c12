//! Command-line front end: optimize, analyze and forecast.

pub mod analysis;
pub mod forecast;
pub mod output;
pub mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use tsforge::clock::ClockKind;
use tsforge::dataset::Frequency;
use tsforge::fidelity::BudgetType;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("no evaluation succeeded at the top rung")]
    NoSuccessfulEvaluation,
    #[error("{0}")]
    Analysis(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Data(_) | CliError::Usage(_) => 2,
            CliError::NoSuccessfulEvaluation => 3,
            CliError::Analysis(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tsforge",
    version,
    about = "AutoML for global time-series forecasting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize, build the ensemble and forecast the test tails.
    Run(RunArgs),
    /// Hyperparameter importance of one or more run histories.
    Importance {
        #[arg(required = true)]
        histories: Vec<PathBuf>,
        /// Directory for the importance CSVs.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Budget value analyzed.
        #[arg(long, default_value_t = 1.0)]
        rung: f64,
        #[arg(long, default_value_t = 50)]
        trees: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Incumbent trajectory and its area under the curve.
    Report {
        history: PathBuf,
        /// Second history reported side by side.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// End of the AUC window in seconds (default: last completion).
        #[arg(long)]
        horizon: Option<f64>,
        /// Directory for the trajectory CSVs (default: print them).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forecast with a saved ensemble.
    Forecast {
        manifest: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "forecasts.csv")]
        out: PathBuf,
        #[command(flatten)]
        csv: CsvArgs,
    },
}

/// Horizon and frequency for CSV inputs (TSF files carry their own).
#[derive(Debug, Clone, Args)]
pub struct CsvArgs {
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub frequency: Option<Frequency>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "epochs")]
    pub budget: BudgetType,
    /// Optimization budget in seconds.
    #[arg(long)]
    pub walltime: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = tsforge::ensemble::DEFAULT_ENSEMBLE_SIZE)]
    pub ensemble_size: usize,
    #[arg(long, default_value_t = 50)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 1000)]
    pub proxy_threshold: usize,
    #[arg(long, default_value_t = 1000)]
    pub proxy_min: usize,
    #[arg(long)]
    pub no_proxy: bool,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// `wall` measures real time; `work` counts training work, for
    /// reproducible budgets.
    #[arg(long, default_value = "wall")]
    pub clock: ClockKind,
    /// Optimizer constants, e.g. `--set cohort_size=9 --set eval_timeout=30`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(flatten)]
    pub csv: CsvArgs,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => run::cmd_run(&run::RunConfig::from_args(&args)?).map(|_| ()),
        Command::Importance {
            histories,
            out,
            rung,
            trees,
            seed,
        } => analysis::cmd_importance(&histories, &out, rung, trees, seed),
        Command::Report {
            history,
            compare,
            horizon,
            out,
        } => analysis::cmd_report(&history, compare.as_deref(), horizon, out.as_deref()),
        Command::Forecast {
            manifest,
            data,
            out,
            csv,
        } => forecast::cmd_forecast(&manifest, &data, &csv, &out),
    }
}

/// Runs the parsed command and maps failures to exit codes.
pub fn main_with(cli: Cli) -> ExitCode {
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tsforge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
