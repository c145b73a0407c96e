//! `lbp`: simulate data, fit the samplers, summarize and diagnose chains,
//! analyze prior dependence and run replicated experiments.

mod analyze;
mod config;
mod data;
mod experiments;
mod fit;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Usage errors exit with 2, data and runtime errors with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<lbp::Error> for CliError {
    fn from(e: lbp::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "lbp", version, about = "Logistic-beta processes: simulation, fitting and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Seed for every random stream of the run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// TOML run configuration; defaults are listed in default.toml.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, env = "LBP_OUT_DIR", default_value = "lbp-out")]
    pub out: PathBuf,
}

impl Common {
    pub fn out_dir(&self) -> Result<&Path, CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::Data(format!("{}: {e}", self.out.display())))?;
        Ok(&self.out)
    }

    pub fn run_config(&self) -> Result<config::RunConfig, CliError> {
        config::RunConfig::load(self.config.as_deref())
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum Scenario {
    Cosine600,
    SpatialLbp,
    SpatialCopula,
    ScenarioA,
    ScenarioB,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum Experiment {
    /// Cosine600 fits: RMSE, coverage and ESS of λ.
    Cosine600,
    /// Blocked vs non-blocked samplers on spatial data.
    Blocking,
    /// Density regression on Scenario A.
    ScenarioA,
    /// Density regression on Scenario B.
    ScenarioB,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and its latent truth.
    Simulate {
        #[arg(long, value_enum)]
        scenario: Scenario,
        /// Sample size; defaults to 600 for cosine600 and 500 otherwise.
        #[arg(long)]
        n: Option<usize>,
        /// Held-out points for spatial scenarios.
        #[arg(long, default_value_t = 0)]
        n_test: usize,
        /// Matérn range for spatial scenarios.
        #[arg(long, default_value_t = 0.2)]
        range: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the binary regression model to `x1[,x2],z` data.
    FitBinary {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the dependent mixture model to `x,y` data.
    FitDdp {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Posterior summaries at new covariates from a saved fit.
    Predict {
        /// fit.json written by fit-binary or fit-ddp.
        #[arg(long)]
        fit: PathBuf,
        /// CSV with an `x` (or `x1[,x2]`) column.
        #[arg(long)]
        points: PathBuf,
        /// For mixture fits, also report pr(y ≤ t | x) in original units.
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Prior dependence curves and competitor correlation bounds.
    PriorAnalyze {
        /// Concentration of the dependent Dirichlet process.
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        /// Largest distance in the dependence table.
        #[arg(long, default_value_t = 1.0)]
        max_distance: f64,
        /// Monte Carlo draws per table entry.
        #[arg(long, default_value_t = 20_000)]
        draws: usize,
        #[command(flatten)]
        common: Common,
    },
    /// ESS, acceptance rates and timings from a saved fit.
    Diagnose {
        #[arg(long)]
        fit: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a named experiment over simulated replicates.
    Replicate {
        #[arg(long, value_enum)]
        experiment: Experiment,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        /// Sample size of each simulated dataset.
        #[arg(long)]
        n: Option<usize>,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            scenario,
            n,
            n_test,
            range,
            common,
        } => experiments::simulate(scenario, n, n_test, range, &common),
        Command::FitBinary { data, common } => fit::fit_binary(&data, &common),
        Command::FitDdp { data, common } => fit::fit_ddp(&data, &common),
        Command::Predict {
            fit,
            points,
            threshold,
            common,
        } => fit::predict(&fit, &points, threshold, &common),
        Command::PriorAnalyze {
            b,
            max_distance,
            draws,
            common,
        } => analyze::prior_analyze(b, max_distance, draws, &common),
        Command::Diagnose { fit, common } => fit::diagnose(&fit, &common),
        Command::Replicate {
            experiment,
            replicates,
            n,
            threads,
            common,
        } => experiments::replicate(experiment, replicates, n, threads, &common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Data(_) => ExitCode::from(1),
            }
        }
    }
}
