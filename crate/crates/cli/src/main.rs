//! `movingwall`: run a scenario and write CSV/JSON results.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use movingwall::Backend;
use serde::Serialize;

mod commands;
mod output;
mod scenario;

use output::Outputs;
use scenario::Scenario;

const FIG1: &str = include_str!("../scenarios/fig1.toml");
const FIG2: &str = include_str!("../scenarios/fig2.toml");

#[derive(Debug, Parser)]
#[command(name = "movingwall", version, about = "Particle in an infinite well with a moving wall")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML). `fig1` and `fig2` fall back to their bundled scenario.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the scenario backend.
    #[arg(long, global = true)]
    backend: Option<BackendArg>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// State coefficients at every time of the grid.
    Evolve,
    /// Density, current, weak momentum and quantum potential on the lattice.
    Observables,
    /// Current change after each small step.
    Deltaj,
    /// Expansion cut-off report.
    Tail,
    /// Bohmian trajectories.
    Bohm,
    /// One run of the weak-measurement signalling protocol.
    Protocol,
    /// `|Re Pw|` over an (x, t) lattice, eigenstate initial state.
    Fig1,
    /// `Re Pw` at a point near the far wall, moving vs fixed wall.
    Fig2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Analytic,
    Spectral,
}

/// Why a run stopped.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] movingwall::Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot encode report: {0}")]
    Json(#[from] serde_json::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> String {
        match self {
            Self::Config(_) => "config".into(),
            Self::Numerical(e) => {
                let debug = format!("{e:?}");
                let end = debug.find([' ', '(', '{']).unwrap_or(debug.len());
                debug[..end].to_string()
            }
            Self::Io(_) => "io".into(),
            Self::Json(_) => "json".into(),
        }
    }
}

#[derive(Serialize)]
struct ErrorReport {
    error: String,
    message: String,
    exit_code: u8,
}

fn load(cli: &Cli) -> Result<Scenario, Failure> {
    let text = match (&cli.scenario, cli.command) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?,
        (None, Command::Fig1) => FIG1.to_string(),
        (None, Command::Fig2) => FIG2.to_string(),
        (None, _) => return Err(Failure::Config("--scenario is required".into())),
    };
    let mut s = Scenario::parse(&text)?;
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(b) = cli.backend {
        s.backend = match b {
            BackendArg::Analytic => Backend::Analytic,
            BackendArg::Spectral => Backend::Spectral,
        };
        s.validate()?;
    }
    Ok(s)
}

fn run(cli: &Cli) -> Result<Outputs, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let s = load(cli)?;
    let out = match cli.command {
        Command::Evolve => commands::evolve(&s),
        Command::Observables => commands::observables(&s),
        Command::Deltaj => commands::deltaj(&s),
        Command::Tail => commands::tail(&s),
        Command::Bohm => commands::bohm(&s),
        Command::Protocol => commands::protocol(&s),
        Command::Fig1 => commands::fig1(&s),
        Command::Fig2 => commands::fig2(&s),
    }?;
    out.write(&cli.out)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            for name in out.names() {
                println!("{}", cli.out.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            let report = ErrorReport {
                error: f.kind(),
                message: f.to_string(),
                exit_code: f.code(),
            };
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_default());
            ExitCode::from(f.code())
        }
    }
}
