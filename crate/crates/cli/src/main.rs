//! `mpqi`: runs scenario files and writes reproducible result tables.

mod config;
mod error;
mod report;
mod scenarios;
mod tasks;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{ScenarioConfig, SCHEMA_VERSION};
use error::CliError;
use report::{write_json, Format};

#[derive(Debug, Parser)]
#[command(name = "mpqi", version, about = "Multi-pulse quantum interferometry scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Bundled scenario name or path to a TOML file.
    scenario: String,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the scenario's `output_dir`, else `out/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo sweeps.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List bundled scenarios.
    List {
        #[arg(long)]
        tag: Option<String>,
        /// Print JSON instead of a text table.
        #[arg(long)]
        json: bool,
    },
    /// Print a bundled scenario's TOML.
    Show { scenario: String },
    /// Run any scenario.
    Run(RunArgs),
    /// Single-pulse propagation: full versus rotating-wave.
    Pulse(RunArgs),
    /// Protocol unitaries, closed forms, pairings and resolutions.
    Protocol(RunArgs),
    /// Three-level Raman pulses and the visibility budget.
    Raman(RunArgs),
    /// Dephasing and Doppler error models.
    Noise(RunArgs),
    /// Maximum-likelihood estimates against the Cramér-Rao bound.
    Estimate(RunArgs),
    /// Sensitivity scans with log-log fits.
    Scan(RunArgs),
    /// Staged lock of the comb phase step.
    Refine(RunArgs),
}

#[derive(Debug, Serialize)]
struct Manifest {
    scenario: String,
    schema_version: u32,
    seed: u64,
    git_rev: &'static str,
    started_at: String,
    config_sha256: String,
    version: &'static str,
    command: &'static str,
    section: &'static str,
    format: Format,
    outputs: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::List { tag, json } => list(tag.as_deref(), json),
        Command::Show { scenario } => {
            let text = scenarios::source(&scenario).ok_or_else(|| unknown_scenario(&scenario))?;
            print!("{text}");
            Ok(())
        }
        Command::Run(a) => run(a, None),
        Command::Pulse(a) => run(a, Some("pulse")),
        Command::Protocol(a) => run(a, Some("protocol")),
        Command::Raman(a) => run(a, Some("raman")),
        Command::Noise(a) => run(a, Some("noise")),
        Command::Estimate(a) => run(a, Some("estimate")),
        Command::Scan(a) => run(a, Some("scan")),
        Command::Refine(a) => run(a, Some("refine")),
    }
}

fn unknown_scenario(name: &str) -> CliError {
    let known: Vec<&str> = scenarios::names().collect();
    CliError::Schema(format!("'{name}' is neither a file nor a bundled scenario ({})", known.join(", ")))
}

fn list(tag: Option<&str>, json: bool) -> Result<(), CliError> {
    let entries = scenarios::list(tag)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&entries)?);
        return Ok(());
    }
    let width = entries.iter().map(|e| e.name.len()).max().unwrap_or(0);
    for e in &entries {
        println!("{:width$}  {:9}  {}", e.name, e.command, e.description);
    }
    Ok(())
}

/// Reads a scenario from disk, falling back to the bundled set.
fn load(scenario: &str) -> Result<(String, String), CliError> {
    let path = Path::new(scenario);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string();
        return Ok((text, stem));
    }
    match scenarios::source(scenario) {
        Some(text) => Ok((text.to_string(), scenario.to_string())),
        None => Err(unknown_scenario(scenario)),
    }
}

fn run(args: RunArgs, expected: Option<&'static str>) -> Result<(), CliError> {
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let (text, stem) = load(&args.scenario)?;
    let cfg = ScenarioConfig::parse(&text)?;
    let task = cfg.task()?;
    if let Some(cmd) = expected {
        if task.command() != cmd {
            return Err(CliError::Schema(format!(
                "scenario's [{}] section runs under `{}`, not `{cmd}`",
                task.section(),
                task.command()
            )));
        }
    }
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Schema(format!("--threads: {e}")))?;
    }
    let name = cfg.name.clone().unwrap_or(stem);
    let seed = args.seed.unwrap_or(cfg.seed);
    let dir = args.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| Path::new("out").join(&name));

    let report = tasks::run(&cfg, &task, seed, &name)?;
    for line in &report.lines {
        println!("{line}");
    }
    let written = report.write_to(&dir, args.format)?;
    let manifest = Manifest {
        scenario: name,
        schema_version: SCHEMA_VERSION,
        seed,
        git_rev: env!("MPQI_GIT_REV"),
        started_at,
        config_sha256: hex::encode(Sha256::digest(text.as_bytes())),
        version: env!("CARGO_PKG_VERSION"),
        command: task.command(),
        section: task.section(),
        format: args.format,
        outputs: written.iter().filter_map(|p| p.file_name()?.to_str().map(String::from)).collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    log::info!("wrote {} files to {}", written.len() + 1, dir.display());
    println!("results in {}", dir.display());
    Ok(())
}
