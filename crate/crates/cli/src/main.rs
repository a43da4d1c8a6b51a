//! `flowlip`: flow-adapted distances, directional Lipschitz extension,
//! maximal-function certificates and transport solvers from a JSON config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Compute(#[from] flowlip_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "flowlip", version, about = "Flow-adapted distances and Lipschitz extension on discretized vector fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct RunArgs {
    /// JSON run config.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// d_λ along the schedule, the λ → 0 limit and the flow-only distance per pair.
    Distance(RunArgs),
    /// Lip_λ(φ) profile and Lip₀(φ) on a flow tube.
    Lipschitz(RunArgs),
    /// Select λ̄, build the McShane extension and verify it.
    Extend(RunArgs),
    /// Integrate curves from the given starts.
    Flow(RunArgs),
    /// Validate a forward-backward curve file and test its triviality.
    Fbcheck(RunArgs),
    /// Maximal function of a lattice function, with the pointwise Sobolev check when `p` is set.
    Maximal(RunArgs),
    /// Along-curve maximal-function certificate per start.
    Certify(RunArgs),
    /// Lagrangian and Eulerian solutions of the continuity equation.
    Transport(RunArgs),
    /// List the catalog fields.
    Catalog,
}

fn init_threads() {
    if let Some(n) = std::env::var("FLOWLIP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Catalog => {
            print!("{}", commands::catalog());
            Ok(())
        }
        Command::Distance(a) => commands::run("distance", a, commands::distance),
        Command::Lipschitz(a) => commands::run("lipschitz", a, commands::lipschitz),
        Command::Extend(a) => commands::run("extend", a, commands::extend),
        Command::Flow(a) => commands::run("flow", a, commands::flow),
        Command::Fbcheck(a) => commands::run("fbcheck", a, commands::fbcheck),
        Command::Maximal(a) => commands::run("maximal", a, commands::maximal),
        Command::Certify(a) => commands::run("certify", a, commands::certify),
        Command::Transport(a) => commands::run("transport", a, commands::transport),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("flowlip: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
