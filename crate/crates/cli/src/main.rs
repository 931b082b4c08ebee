use std::path::PathBuf;
use std::process::ExitCode;

use carleman_cli::{run_scenario, Kind, RunOptions};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "carleman", version, about = "Run pseudoconvexity, Carleman-weight and wave-control scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized parts; overrides the scenario's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Strong pseudoconvexity of a level set.
    CheckSurface(Common),
    /// Analytic (and optionally geometric) convexification of a surface.
    Convexify(Common),
    /// Bicharacteristic integration and tangency.
    Flow(Common),
    /// Geodesic distance fields on a grid.
    Distance(Common),
    /// Noncharacteristic sweep of a foliation.
    Sweep(Common),
    /// Gaussian time multiplier on a sampled signal.
    Multiplier(Common),
    /// Wave equation simulation.
    Simulate(Common),
    /// Discrete Carleman ratio curves.
    CarlemanRatio(Common),
    /// Approximate control cost curve.
    Control(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::CheckSurface(c) => (Kind::CheckSurface, c),
        Command::Convexify(c) => (Kind::Convexify, c),
        Command::Flow(c) => (Kind::Flow, c),
        Command::Distance(c) => (Kind::Distance, c),
        Command::Sweep(c) => (Kind::Sweep, c),
        Command::Multiplier(c) => (Kind::Multiplier, c),
        Command::Simulate(c) => (Kind::Simulate, c),
        Command::CarlemanRatio(c) => (Kind::CarlemanRatio, c),
        Command::Control(c) => (Kind::Control, c),
    };
    if let Some(n) = common.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("schema error: --threads must be a positive integer");
            return ExitCode::from(2);
        }
    }
    let code = run_scenario(kind, &RunOptions { config: common.config, out: common.out, seed: common.seed });
    ExitCode::from(code as u8)
}
