use std::path::PathBuf;
use std::process::ExitCode;

use cbi_core::experiment::{self, Command, Overrides};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cbi-lab", version, about = "Simulate CBI processes and check smoothing hypotheses")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check admissibility of the parameter tuple
    Validate(Args),
    /// Derive a smoothing certificate from the symbols
    Certify(Args),
    /// Evaluate the hypotheses of the theorem named in [checks]
    Check(Args),
    /// Simulate the terminal law (and optionally the skeleton)
    Simulate(Args),
    /// Weighted density estimate and Besov moduli
    Density(Args),
    /// Monte Carlo Laplace transform against the Riccati oracle
    OracleCompare(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

fn split(cmd: Cmd) -> (Command, Args) {
    match cmd {
        Cmd::Validate(a) => (Command::Validate, a),
        Cmd::Certify(a) => (Command::Certify, a),
        Cmd::Check(a) => (Command::Check, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Density(a) => (Command::Density, a),
        Cmd::OracleCompare(a) => (Command::OracleCompare, a),
    }
}

fn init_threads() {
    let Ok(v) = std::env::var("CBI_LAB_THREADS") else { return };
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring CBI_LAB_THREADS={v:?}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let (command, args) = split(cli.command);
    let overrides = Overrides { seed: args.seed, paths: args.paths };
    match experiment::run(command, &args.config, &args.out, &overrides) {
        Ok(outcome) => {
            if !args.quiet {
                println!("{}", outcome.summary);
                for a in &outcome.artifacts {
                    println!("wrote {}", a.display());
                }
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e @ cbi_core::Error::ConfigParse { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            ExitCode::from(1)
        }
    }
}
