//! `thermal-rabi`: thermal Rabi-frequency distributions, thermometry from
//! Rabi traces and robustness maps of adiabatic transfer pulses.
//!
//! Exit codes: 0 on success, 1 when a computation fails numerically, 2 when
//! the input (arguments, config or data files) is invalid.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use commands::{Context, RunMetadata};
use config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] thermal_rabi::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_input_error() => 2,
            CliError::Core(_) | CliError::Io(_) | CliError::Json(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "thermal-rabi", version, about = "Thermal Rabi distributions, thermometry and RAP robustness maps")]
struct Cli {
    /// JSON run configuration; without it the ca40_reference preset is used
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed of the synthetic-trace generator
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact, smoothed and fitted Rabi-frequency distributions
    Dist,
    /// Square-pulse Rabi oscillation, exact sum against the effective model
    Rabi {
        #[arg(long)]
        t_max_us: Option<f64>,
        #[arg(long)]
        n_points: Option<usize>,
    },
    /// Thermally averaged RAP transfer against calibration amplitude
    RapScan {
        /// Comma-separated Ω₀^(cal)/2π values in kHz
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        amplitudes_khz: Option<Vec<f64>>,
        /// Comma-separated chirp ranges r_c in kHz
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        chirps_khz: Option<Vec<f64>>,
    },
    /// Thermometry fit of a measured or synthetic Rabi trace
    Fit {
        /// CSV with columns duration_us,p_excited[,std_err][,n_shots]
        trace: Option<PathBuf>,
        /// Generate a seeded synthetic trace from the config instead
        #[arg(long)]
        synthetic: bool,
    },
    /// log₁₀ infidelity over amplitude scale and static detuning
    Map,
    /// Calibrate T/T_D = c·b² over a temperature grid
    CalibrateC,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Dist => "dist",
            Command::Rabi { .. } => "rabi",
            Command::RapScan { .. } => "rap-scan",
            Command::Fit { .. } => "fit",
            Command::Map => "map",
            Command::CalibrateC => "calibrate-c",
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<(RunConfig, String), ConfigError> {
    let raw: Value = match path {
        None => json!({"schema_version": config::SCHEMA_VERSION, "preset": config::DEFAULT_PRESET}),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
        }
    };
    let resolved = config::resolve(raw)?;
    let hash = config::config_hash(&resolved);
    Ok((RunConfig::from_value(resolved)?, hash))
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError("--threads: must be ≥ 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError(format!("--threads: {e}")))?;
    }
    let (config, hash) = load_config(cli.config.as_deref())?;
    std::fs::create_dir_all(&cli.out)?;
    let ctx = Context {
        config: &config,
        out: &cli.out,
        run_metadata: RunMetadata {
            tool: "thermal-rabi".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: cli.command.name().into(),
            config_sha256: hash,
            seed: cli.seed,
        },
    };
    match cli.command {
        Command::Dist => commands::dist(&ctx),
        Command::Rabi { t_max_us, n_points } => commands::rabi(&ctx, t_max_us, n_points),
        Command::RapScan { amplitudes_khz, chirps_khz } => commands::rap_scan(&ctx, amplitudes_khz, chirps_khz),
        Command::Fit { trace, synthetic } => commands::fit(&ctx, trace.as_deref(), synthetic),
        Command::Map => commands::map(&ctx),
        Command::CalibrateC => commands::calibrate(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
