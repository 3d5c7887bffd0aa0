//! Experiment runner for the AM/PM noise analysis library.
//!
//! Exit codes: 0 success, 2 configuration/schema error, 3 computation error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

#[derive(Debug)]
pub enum CliError {
    /// Bad config file, schema violation, missing input (exit 2).
    Config(String),
    /// Failure while computing (exit 3).
    Compute(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Compute(m) => write!(f, "computation error: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "nlnoise",
    about = "AM/PM noise transfer functions of second-order-nonlinear circuits: closed forms, ODE verification, extraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config leaf, e.g. --set excitation.omega0=2e11 (repeatable).
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    set: Vec<String>,

    /// Output directory (default runs/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for sweeps (falls back to NLNOISE_JOBS, then all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form transfer functions, harmonics and validity over a sweep.
    Analyze,
    /// Theory vs two-tone ODE measurement comparison table.
    Simulate,
    /// Curve-tracer extraction and overall bipolar transfer functions.
    Extract,
    /// Stochastic noise run: spectra of a_n, phi_n and the injected noise.
    Psd,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Simulate => "simulate",
            Command::Extract => "extract",
            Command::Psd => "psd",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e @ CliError::Compute(_)) => {
            eprintln!("{e}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <file> is required".into()))?;
    let mut tree = config::load_tree(config_path)?;
    for setting in &cli.set {
        config::apply_override(&mut tree, setting)?;
    }
    if let Some(seed) = cli.seed {
        config::set_path(&mut tree, "seed", toml::Value::Integer(seed as i64))
            .map_err(CliError::Config)?;
    }
    // Validate schema and tag fields before doing any work. Numeric leaves
    // may still be filled in per sweep point, but tags never are.
    let base = config::validate(&tree)?;
    config::check_tags(&base)?;
    let seed = base.seed;

    let jobs = cli
        .jobs
        .or_else(|| std::env::var("NLNOISE_JOBS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0); // 0 = rayon default

    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(cli.command.name()));
    let mut run_dir = output::RunDir::create(&out_dir)?;
    run_dir.write_manifest(cli.command.name(), &tree, seed, jobs, &cli.set)?;

    let result = match cli.command {
        Command::Analyze => {
            let points = config::expand_sweep(&tree)?;
            commands::cmd_analyze(&points, &mut run_dir)
        }
        Command::Simulate => {
            let points = config::expand_sweep(&tree)?;
            commands::cmd_simulate(&points, jobs, &mut run_dir)
        }
        Command::Extract => commands::cmd_extract(&base, &mut run_dir),
        Command::Psd => commands::cmd_psd(&base, seed, &mut run_dir),
    };
    if let Err(e) = &result {
        run_dir.log_file_only(&format!("{e}"));
    }
    result
}
