//! `recsurv`: survival analysis of recurrent record-breaking events.

mod commands;
mod output;
mod plot;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use output::Format;
use recsurv::cox::Scheme;
use recsurv::workflow::Subset;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "recsurv",
    version,
    about = "Survival analysis for recurrent events"
)]
pub struct Cli {
    /// Random seed (overrides the seed in a simulation config)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output artifacts
    #[arg(long, global = true, default_value = "recsurv-out")]
    pub output: PathBuf,
    /// Format of tabular artifacts
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Validate a spell CSV and write a normalised copy with a summary
    Ingest(InputArgs),
    /// Kaplan-Meier curve of record durations
    Km(KmArgs),
    /// Survival curves from one or more estimators
    Survfit(SurvfitArgs),
    /// Log-rank screening of covariates
    Logrank(LogrankArgs),
    /// Lagged-duration dependence checks
    Depcheck(DepcheckArgs),
    /// Recurrent-event Cox model
    Coxfit(CoxfitArgs),
    /// Discrete-time logistic hazard model
    Logit(LogitArgs),
    /// Fit all five models, eliminate, and rank by AIC
    Models(ModelsArgs),
    /// Expected record breaks at a future Games
    Predict(PredictArgs),
    /// Generate a synthetic dataset
    Simulate(SimulateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Spell CSV
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct KmArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Also write an SVG step plot
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorArg {
    Km,
    Wc,
    Gkm,
    Frailty,
}

#[derive(Debug, Args, Serialize)]
pub struct SurvfitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Estimators to fit (comma separated or repeated)
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub estimator: Vec<EstimatorArg>,
    /// Fix the frailty shape instead of estimating it
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Also write an SVG step plot of all curves
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct LogrankArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Covariates to screen (default: Category and every covariate column)
    #[arg(long, value_delimiter = ',')]
    pub covariate: Vec<String>,
    /// Also write one SVG of group curves per covariate
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct CovariateSelection {
    /// Covariates to include (default: those kept by log-rank screening)
    #[arg(long, value_delimiter = ',', conflicts_with = "no_covariates")]
    pub covariate: Vec<String>,
    /// Fit without additional covariates
    #[arg(long)]
    pub no_covariates: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DepcheckArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Lag k between the outcome record and the lagged record
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
    pub lag: u32,
    #[arg(long, default_value = "all", value_parser = parse_subset)]
    pub subset: Subset,
    /// Smallest record number n (default k + 1)
    #[arg(long)]
    pub n_min: Option<u32>,
    /// Largest record number n (default: the longest event)
    #[arg(long)]
    pub n_max: Option<u32>,
    #[command(flatten)]
    pub covariates: CovariateSelection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RobustArg {
    /// Cluster score residuals by event
    Cluster,
    /// Each interval its own cluster
    None,
}

#[derive(Debug, Args, Serialize)]
pub struct CoxfitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Scheme,
    #[command(flatten)]
    pub covariates: CovariateSelection,
    #[arg(long, value_enum, default_value_t = RobustArg::Cluster)]
    pub robust: RobustArg,
}

#[derive(Debug, Args, Serialize)]
pub struct LogitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub covariates: CovariateSelection,
    /// Leave out the Time and Time2 regressors
    #[arg(long)]
    pub no_time_terms: bool,
    /// Also write an SVG of Pearson residuals against record age
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub covariates: CovariateSelection,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    /// Games year to predict
    #[arg(long)]
    pub year: i32,
    /// CSV of year_set,count (default: open records in --input)
    #[arg(long)]
    pub cohorts: Option<PathBuf>,
    /// CSV of estimator,time,estimate curves
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub curves: Option<PathBuf>,
    /// Spell CSV to estimate the curves from
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Estimators to predict with
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "wc,gkm,frailty"
    )]
    pub estimator: Vec<EstimatorArg>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// JSON simulation config
    #[arg(long)]
    pub config: PathBuf,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse()
}

fn parse_subset(s: &str) -> Result<Subset, String> {
    s.parse()
}

/// Input or configuration that the user must fix; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        return 1;
    }
    match err.chain().find_map(|e| e.downcast_ref::<recsurv::Error>()) {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("error: {err:#}");
            if code == 3 {
                if let Err(e) = commands::write_diagnostic(&cli, &err) {
                    eprintln!("error: could not write diagnostic: {e:#}");
                }
            }
            ExitCode::from(code)
        }
    }
}
