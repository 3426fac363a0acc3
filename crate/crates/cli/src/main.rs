//! Command-line entry point: planning runs, scenario and dataset
//! generation, surrogate training, benchmarking, and static rendering.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::AppConfig;

#[derive(Debug, Parser)]
#[command(
    name = "dynfield",
    about = "Dynamic-potential-field MPC local planner",
    version
)]
pub struct Cli {
    /// Base seed for every stochastic component.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads for benchmark cells (env DYNFIELD_THREADS).
    #[arg(long, global = true, env = "DYNFIELD_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one planner on one scenario and render the result.
    Plan(commands::plan::PlanArgs),
    /// Generate validated benchmark scenarios (maps + TOML specs).
    GenScenarios(commands::gen_scenarios::GenScenariosArgs),
    /// Generate a supervised potential dataset (CSV + map rasters).
    GenDataset(commands::gen_dataset::GenDatasetArgs),
    /// Train a surrogate variant on a generated dataset.
    Train(commands::train::TrainArgs),
    /// Run the comparative benchmark over a scenario suite.
    Bench(commands::bench::BenchArgs),
    /// Render a map or exported field raster to SVG or PGM.
    Render(commands::render::RenderArgs),
}

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or unparseable inputs (exit 2).
    Parse(String),
    /// The global planner found no path (exit 3).
    NoPath(String),
    /// The receding-horizon run exhausted its budget (exit 4).
    GoalUnreached(String),
    /// Everything else (exit 1).
    Other(anyhow::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "parse",
            CliError::NoPath(_) => "no_path",
            CliError::GoalUnreached(_) => "goal_unreached",
            CliError::Other(_) => "internal",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Parse(m) | CliError::NoPath(m) | CliError::GoalUnreached(m) => m.clone(),
            CliError::Other(e) => format!("{e:#}"),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::NoPath(_) => 3,
            CliError::GoalUnreached(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Other(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "kind": err.kind(),
                "error": err.message(),
            });
            eprintln!("{payload}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| CliError::Other(anyhow::anyhow!("cannot create out dir: {e}")))?;
    let config =
        AppConfig::load(cli.config.as_deref()).map_err(|e| CliError::Parse(format!("{e:#}")))?;
    let threads = cli
        .threads
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1);
    let ctx = commands::Context {
        seed: cli.seed,
        out_dir: cli.out_dir,
        config,
        threads,
    };
    match cli.command {
        Command::Plan(args) => commands::plan::run(&ctx, args),
        Command::GenScenarios(args) => commands::gen_scenarios::run(&ctx, args),
        Command::GenDataset(args) => commands::gen_dataset::run(&ctx, args),
        Command::Train(args) => commands::train::run(&ctx, args),
        Command::Bench(args) => commands::bench::run(&ctx, args),
        Command::Render(args) => commands::render::run(&ctx, args),
    }
}
