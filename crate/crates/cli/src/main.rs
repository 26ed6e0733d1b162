//! `resfluor` command-line front end.
//!
//! Every run writes its outputs plus `manifest.json` (resolved configuration
//! and version) into `--out`. Failures print one JSON object on stderr and
//! exit with 2 (configuration) or 3 (numerical).

mod config;
mod error;
mod jobs;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use resfluor::exec::Parallelism;
use serde::{Deserialize, Serialize};

use config::RunConfig;
use error::CliError;
use jobs::Job;

const TOOL: &str = "resfluor";
const MANIFEST: &str = "manifest.json";

#[derive(Parser, Debug)]
#[command(name = "resfluor", version, about = "Cascaded resonance-fluorescence simulator")]
struct Cli {
    /// JSON run configuration; defaults apply to missing sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Trajectories per ensemble for `mc`; overrides the configuration.
    #[arg(long, global = true)]
    trajectories: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Emission spectrum of the driven emitter.
    Spectrum,
    /// Transition energies against the drive amplitude.
    Lines,
    /// Sideband cross-correlation g²₁₂(τ).
    G2,
    /// Monte Carlo heralding experiment.
    Mc,
    /// Parameter map of negativity, R and emission rate.
    Map,
    /// One-dimensional negativity optimization.
    Optimal,
    /// Polariton target: detection matrix, concurrence and Bell fit.
    Polariton,
    /// Re-run the job recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    tool: String,
    version: String,
    job: Job,
    config: RunConfig,
    outputs: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(CliError::Config(e.to_string().trim().to_string())),
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let (job, mut cfg) = match &cli.command {
        Command::Replay { manifest } => {
            let m: Manifest = serde_json::from_str(&read(manifest)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", manifest.display())))?;
            if m.tool != TOOL {
                return Err(CliError::Config(format!("manifest written by `{}`", m.tool)));
            }
            (m.job, m.config)
        }
        other => {
            let cfg = match &cli.config {
                Some(path) => serde_json::from_str(&read(path)?)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
                None => RunConfig::default(),
            };
            (job_of(other), cfg)
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.trajectories {
        cfg.mc.trajectories = n;
    }
    let par = parallelism(cli.threads)?;
    let outputs = jobs::run(job, &cfg, par)?;
    let manifest = Manifest {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        job,
        config: cfg,
        outputs: outputs.iter().map(|(name, _)| name.clone()).collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_all(&cli.out, &outputs, &text)
}

fn job_of(cmd: &Command) -> Job {
    match cmd {
        Command::Spectrum => Job::Spectrum,
        Command::Lines => Job::Lines,
        Command::G2 => Job::G2,
        Command::Mc => Job::Mc,
        Command::Map => Job::Map,
        Command::Optimal => Job::Optimal,
        Command::Polariton => Job::Polariton,
        Command::Replay { .. } => unreachable!("replay resolves its job from the manifest"),
    }
}

/// Results do not depend on the thread count; it only bounds the pool.
fn parallelism(threads: Option<usize>) -> Result<Parallelism, CliError> {
    match threads {
        None => Ok(Parallelism::Rayon),
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        Some(1) => Ok(Parallelism::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))?;
            Ok(Parallelism::Rayon)
        }
    }
}

fn write_all(dir: &Path, outputs: &[(String, String)], manifest: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Numerical(format!("writing {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    for (name, contents) in outputs {
        fs::write(dir.join(name), contents).map_err(io)?;
    }
    fs::write(dir.join(MANIFEST), manifest).map_err(io)
}
