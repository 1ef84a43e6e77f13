use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};
use nehari_cli::{run, Invocation, Subcommand};

#[derive(Parser)]
#[command(
    name = "nehari",
    version,
    about = "Two-branch Nehari solver for concave-convex systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (flat TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing. Overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Minimise on both branches and dump the four fields.
    Solve(Common),
    /// Dual solves over a list of λ values, as CSV.
    Sweep(Common),
    /// Fibering geometry of the default initial states.
    Classify(Common),
    /// Embedding constants and the threshold λ₁.
    Constants(Common),
    /// Oracle suites with per-invariant counts.
    Verify(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (sub, common) = match cli.command {
        Command::Solve(c) => (Subcommand::Solve, c),
        Command::Sweep(c) => (Subcommand::Sweep, c),
        Command::Classify(c) => (Subcommand::Classify, c),
        Command::Constants(c) => (Subcommand::Constants, c),
        Command::Verify(c) => (Subcommand::Verify, c),
    };
    let inv = Invocation {
        config: common.config,
        out: common.out,
        seed: common.seed,
    };
    match run(sub, &inv) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}
