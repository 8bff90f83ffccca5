use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use sdc_cli::commands::{self, Overrides};
use sdc_cli::scenario::Line;
use sdc_cli::{CliError, ScenarioFile};

/// Analysis, synthesis and simulation of singular systems with an input delay.
///
/// Exit codes: 0 success, 2 invalid input or I/O, 3 analysis failure,
/// 4 failed stability certificate, 5 numerical blowup.
#[derive(Debug, Parser)]
#[command(name = "sdc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Relative singular-value threshold for numerical rank.
    #[arg(long, global = true)]
    tol_rank: Option<f64>,
    /// Accepted canonical-form residual.
    #[arg(long, global = true)]
    tol_decomp: Option<f64>,
    /// Line of the delay certificate: `-` for Re s = -v1, `+` for Re s = +v1.
    #[arg(long, global = true, allow_hyphen_values = true)]
    margin_line_sign: Option<Sign>,
    /// Resynthesis period of the adaptive controller, in steps.
    #[arg(long, global = true)]
    ksyn: Option<usize>,
    /// Seed for noise signals without their own seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sign {
    #[value(name = "-")]
    Minus,
    #[value(name = "+")]
    Plus,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Regularity, index, canonical form and minimality report.
    Analyze { scenario: PathBuf },
    /// Controller design from the scenario's controller section.
    Synthesize {
        scenario: PathBuf,
        /// Also write the parameters to this file.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Closed-loop run writing trajectory.csv, estimator.csv and diagnostics.json.
    Simulate {
        scenario: PathBuf,
        #[arg(long, short, default_value = ".")]
        out_dir: PathBuf,
        /// Controller parameters written by `synthesize`, used instead of a fresh design.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Open-loop run with the estimator active.
    Estimate {
        scenario: PathBuf,
        #[arg(long, short, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn load(path: &PathBuf, overrides: &Overrides) -> sdc_cli::Result<ScenarioFile> {
    let mut sc = ScenarioFile::load(path)?;
    overrides.apply(&mut sc);
    sc.validate()?;
    Ok(sc)
}

fn run(cli: Cli) -> sdc_cli::Result<serde_json::Value> {
    let overrides = Overrides {
        tol_rank: cli.tol_rank,
        tol_decomp: cli.tol_decomp,
        margin_line: cli.margin_line_sign.map(|s| match s {
            Sign::Minus => Line::Left,
            Sign::Plus => Line::Right,
        }),
        k_syn: cli.ksyn,
        seed: cli.seed,
    };
    match cli.command {
        Command::Analyze { scenario } => {
            let report = commands::analyze(&load(&scenario, &overrides)?)?;
            Ok(to_value(&report))
        }
        Command::Synthesize { scenario, out } => {
            let params = commands::synthesize(&load(&scenario, &overrides)?)?;
            if let Some(path) = out {
                std::fs::write(&path, commands::to_json_text(&params)).map_err(|source| CliError::Write { path, source })?;
            }
            Ok(to_value(&params))
        }
        Command::Simulate { scenario, out_dir, params } => {
            let sc = load(&scenario, &overrides)?;
            let params = params.as_deref().map(commands::load_params).transpose()?;
            finish(commands::simulate(&sc, params)?, &out_dir)
        }
        Command::Estimate { scenario, out_dir } => finish(commands::estimate(&load(&scenario, &overrides)?)?, &out_dir),
    }
}

/// Writes the run files even when the run blew up, then reports the status.
fn finish(result: sdc_core::sim::RunResult, out_dir: &std::path::Path) -> sdc_cli::Result<serde_json::Value> {
    commands::write_outputs(&result, out_dir)?;
    result.status()?;
    Ok(json!({ "status": "ok", "diagnostics": result.diagnostics }))
}

fn to_value<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("serializable")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SDC_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            println!("{}", serde_json::to_string_pretty(&e.to_json()).expect("serializable"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
