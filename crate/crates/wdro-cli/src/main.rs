use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use wdro_cli::commands;
use wdro_cli::config::Config;

#[derive(Parser)]
#[command(
    name = "wdro",
    version,
    about = "Distributionally robust estimation and confidence regions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the empirical and robust estimators on one dataset
    Fit(RunArgs),
    /// Build confidence regions around one fit (two-dimensional models)
    Region(RunArgs),
    /// Estimate region coverage over a grid of generating parameters
    Coverage(RunArgs),
    /// Collect paired estimates across replications
    Scatter(RunArgs),
    /// Compare scaled deviations against their predicted limits
    Limit(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run configuration
    #[arg(long)]
    config: PathBuf,
    /// Seed override; wins over the config and the WDRO_SEED variable
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replication loops (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (default: wdro-<command>-out)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn dispatch(name: &str, args: &RunArgs) -> Result<(), String> {
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err("--jobs must be at least 1".to_string());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| format!("could not size the worker pool: {e}"))?;
    }
    let cfg = Config::load(&args.config).map_err(|e| e.to_string())?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("wdro-{name}-out")));
    let result = match name {
        "fit" => commands::fit::run(&cfg, args.seed, &out).map(|_| ()),
        "region" => commands::region::run(&cfg, args.seed, &out).map(|_| ()),
        "coverage" => commands::coverage::run(&cfg, args.seed, &out).map(|_| ()),
        "scatter" => commands::scatter::run(&cfg, args.seed, &out).map(|_| ()),
        "limit" => commands::limit::run(&cfg, args.seed, &out).map(|_| ()),
        _ => unreachable!("subcommands are exhaustive"),
    };
    result.map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Fit(a) => ("fit", a),
        Command::Region(a) => ("region", a),
        Command::Coverage(a) => ("coverage", a),
        Command::Scatter(a) => ("scatter", a),
        Command::Limit(a) => ("limit", a),
    };
    match dispatch(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("wdro {name}: {msg}");
            ExitCode::FAILURE
        }
    }
}
