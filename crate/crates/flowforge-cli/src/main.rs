//! flowforge: synthetic optical-flow triplets from single frames.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 data integrity
//! error. Usage problems (unknown flags, out-of-range values, malformed
//! config keys) never get past argument resolution, so a run that starts
//! processing data can only fail for I/O or integrity reasons.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};

use error::RunError;

#[derive(Parser, Debug)]
#[command(
    name = "flowforge",
    version,
    about = "Synthesize, evaluate, and inspect optical-flow training triplets",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize (frame, flow, frame') triplets from frames plus depth.
    Synth(config::SynthArgs),
    /// Compare a predicted dataset against ground truth.
    Eval(commands::eval::EvalArgs),
    /// Re-run the consistency filter over an existing dataset.
    Filter(commands::filter::FilterArgs),
    /// Render flow fields and triplets as color images.
    Viz(commands::viz::VizArgs),
    /// Print protocol constants, or describe a file or triplet.
    Info(commands::info::InfoArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            match err.kind() {
                // --help and --version are successful outcomes.
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    std::process::exit(0);
                }
                _ => {
                    eprint!("{err}");
                    std::process::exit(error::EXIT_USAGE);
                }
            }
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {}", err.message);
        std::process::exit(err.code);
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Synth(args) => {
            let cfg = config::resolve(&args)?;
            commands::synth::run(&cfg)
        }
        Command::Eval(args) => commands::eval::run(&args),
        Command::Filter(args) => commands::filter::run(&args),
        Command::Viz(args) => commands::viz::run(&args),
        Command::Info(args) => commands::info::run(&args),
    }
}
