//! Command-line experiment runner: strict TOML configs in, CSV data files
//! and a checksummed run manifest out.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::SecondsFormat;
use clap::{Parser, Subcommand};

pub mod config;
pub mod csvout;
pub mod experiments;
pub mod manifest;

use manifest::RunManifest;

/// Runner-level failure, carrying the process exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    /// Machine-readable code recorded in the manifest.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Infeasible(_) => "infeasible",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
        }
    }
}

impl From<sociq::Error> for CliError {
    fn from(err: sociq::Error) -> Self {
        use sociq::Error::*;
        match &err {
            Validation { .. } | Unsupported { .. } => CliError::Config(err.to_string()),
            Infeasible { .. } => CliError::Infeasible(err.to_string()),
            Unstable { .. } | NoFiniteRoot { .. } | NonConvergence { .. } | FitFailed { .. } => {
                CliError::Numeric(err.to_string())
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "sociq", version, about = "Queueing-model experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Where to write data files and the manifest (overrides the config).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Master RNG seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Replication count (overrides the config).
        #[arg(long)]
        replications: Option<u32>,
        /// Worker threads; 0 or omitted picks the machine default.
        #[arg(long)]
        threads: Option<usize>,
        /// Cap slot counts at one million for a fast pass.
        #[arg(long)]
        quick: bool,
    },
    /// Parse and validate a config file, echoing its canonical form.
    Validate { config: PathBuf },
    /// List the available experiments.
    ListExperiments,
    /// Print the tool version.
    Version,
}

/// Entry point behind `main`; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            output_dir,
            seed,
            replications,
            threads,
            quick,
        } => run_cmd(&config, output_dir, seed, replications, threads, quick),
        Command::Validate { config } => validate_cmd(&config),
        Command::ListExperiments => {
            for exp in config::Experiment::ALL {
                println!("{:<16} {}", exp.name(), exp.blurb());
            }
            Ok(())
        }
        Command::Version => {
            println!("sociq {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error ({}): {err}", err.code());
            err.exit_code()
        }
    }
}

fn validate_cmd(path: &std::path::Path) -> CliResult<()> {
    let config = config::load_config(path)?;
    print!("{}", config.canonical_toml()?);
    Ok(())
}

fn run_cmd(
    path: &std::path::Path,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
    replications: Option<u32>,
    threads: Option<usize>,
    quick: bool,
) -> CliResult<()> {
    let mut config = config::load_config(path)?;
    if let Some(dir) = output_dir {
        config.output_dir = dir;
    }
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if let Some(reps) = replications {
        config.replications = reps;
    }
    if quick {
        config.apply_quick();
    }
    config.validate()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;

    let out_dir = config.output_dir.clone();
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let config_hash = manifest::sha256_hex(config.canonical_toml()?.as_bytes());

    let ctx = experiments::RunContext {
        out_dir: out_dir.clone(),
        master_seed: config.master_seed,
        replications: config.replications,
    };
    let started_at = now_rfc3339();
    let result = pool.install(|| experiments::dispatch(&config, &ctx));
    let finished_at = now_rfc3339();

    let mut record = RunManifest {
        tool: "sociq".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: config.experiment.name().to_string(),
        config_hash,
        master_seed: config.master_seed,
        replications: config.replications,
        threads: pool.current_num_threads(),
        quick,
        started_at,
        finished_at,
        status: "ok".to_string(),
        error_code: None,
        error_message: None,
        summary: BTreeMap::new(),
        outputs: Vec::new(),
    };
    match result {
        Ok(outcome) => {
            record.summary = outcome.summary;
            record.outputs = outcome.outputs;
            record.write(&out_dir)?;
            println!("run complete: {}", config.experiment.name());
            for (key, value) in &record.summary {
                println!("  {key} = {value}");
            }
            println!("outputs in {}:", out_dir.display());
            for out in &record.outputs {
                println!("  {}  {} rows  {}", out.path, out.rows, out.sha256);
            }
            Ok(())
        }
        Err(err) => {
            record.status = "error".to_string();
            record.error_code = Some(err.code().to_string());
            record.error_message = Some(err.to_string());
            record.write(&out_dir)?;
            Err(err)
        }
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}
