use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use stochastic_bidomain::cli::{dispatch, load_config, Command, Overrides};

/// Stochastic bidomain solver and verification harness.
///
/// Exit status: 0 when every gate passes, 1 when a gate fails, 2 on errors.
#[derive(Parser, Debug)]
#[command(name = "bidomain", version)]
struct Args {
    /// simulate, ensemble, verify-energy, verify-moments, verify-translation,
    /// verify-stability, verify-monodomain or check-structure
    subcommand: String,
    /// JSON scenario configuration; defaults are used when absent
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of paths (and stability pairs), overriding the configuration
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

fn run(args: &Args) -> stochastic_bidomain::Result<u8> {
    let command: Command = args.subcommand.parse()?;
    let mut config = load_config(args.config.as_deref())?;
    Overrides {
        seed: args.seed,
        out: args.out.clone(),
        paths: args.paths,
    }
    .apply(&mut config);
    let outcome = dispatch(command, &config)?;
    if !args.quiet {
        println!("{}", outcome.summary);
        for a in &outcome.artifacts {
            println!("  wrote {}", a.display());
        }
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("bidomain: {e}");
            ExitCode::from(2)
        }
    }
}
