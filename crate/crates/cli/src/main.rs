//! Batch experiment runner: every library operation is reachable through
//! a config file and a subcommand, emitting plot-ready CSV plus a JSON
//! report that embeds the resolved config and the binary version.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical error. Errors
//! are also printed as one JSON object on stderr.

mod config;
mod output;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use output::RunOutput;

#[derive(Debug)]
pub enum CliError {
    /// Config/schema/IO problems: exit code 2.
    Validation(String),
    /// Solver and estimator failures: exit code 3.
    Numerical(String),
}

impl From<twistlab_core::Error> for CliError {
    fn from(e: twistlab_core::Error) -> CliError {
        match e {
            twistlab_core::Error::InvalidParameter(msg) => CliError::Validation(msg),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "twistlab", version, about = "Twisted cohomological equation laboratory")]
struct Cli {
    /// Path to the experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV artifacts and report.json.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the sample loops (0 = all cores). Results are
    /// byte-identical for any value.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the Markov partition and dump its cells.
    Partition,
    /// Solve the twisted equation and dump the solution averages.
    Solve,
    /// Haar-analyze the input data: coefficients, Besov norms, regularity.
    Analyze,
    /// Analyze, then apply the fractional derivative D^β.
    Fracderiv,
    /// The CLT experiment on martingale approximations.
    Clt,
    /// Asymptotic variance by both estimators.
    Variance,
    /// The regularity-dichotomy classifier.
    Classify,
    /// σ²(β) over a grid of twist exponents.
    SweepBeta,
    /// Transfer-operator spectrum, invariant density, pressure check.
    Spectrum,
    /// Compare the solver against a closed-form oracle.
    OracleCheck {
        /// "weierstrass" or "takagi".
        oracle: String,
        /// Amplitude base for the Weierstrass oracle.
        #[arg(long)]
        a: Option<f64>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("--config <file.json> is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn dispatch(cli: &Cli) -> Result<(ExperimentConfig, &'static str, RunOutput), CliError> {
    let config = load_config(cli)?;
    let (name, out): (&'static str, RunOutput) = match &cli.command {
        Command::Partition => ("partition", runner::run_partition(&config)?),
        Command::Solve => ("solve", runner::run_solve(&config)?),
        Command::Analyze => ("analyze", runner::run_analyze(&config)?),
        Command::Fracderiv => ("fracderiv", runner::run_fracderiv(&config)?),
        Command::Clt => ("clt", runner::run_clt(&config)?),
        Command::Variance => ("variance", runner::run_variance(&config)?),
        Command::Classify => ("classify", runner::run_classify(&config)?),
        Command::SweepBeta => ("sweep-beta", runner::run_sweep(&config)?),
        Command::Spectrum => ("spectrum", runner::run_spectrum(&config)?),
        Command::OracleCheck { oracle, a } => {
            ("oracle-check", runner::run_oracle_check(&config, oracle, *a)?)
        }
    };
    Ok((config, name, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!(
            "{}",
            serde_json::json!({"error": {"kind": "validation", "message": e.to_string()}})
        );
        return ExitCode::from(2);
    }
    match dispatch(&cli) {
        Ok((config, name, out)) => {
            if let Err(e) = output::emit(&cli.out, name, &config, &out) {
                return report_error(e);
            }
            for line in &out.summary {
                println!("{line}");
            }
            println!("report: {}", cli.out.join("report.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => report_error(e),
    }
}

fn report_error(e: CliError) -> ExitCode {
    let (kind, message, code) = match e {
        CliError::Validation(m) => ("validation", m, 2),
        CliError::Numerical(m) => ("numerical", m, 3),
    };
    eprintln!(
        "{}",
        serde_json::json!({"error": {"kind": kind, "message": message}})
    );
    ExitCode::from(code)
}
