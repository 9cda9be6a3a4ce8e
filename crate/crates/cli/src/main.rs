mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{
    CommandArgs, FileConfig, GlobalArgs, HilbertArgs, KernelArgs, ModulusArgs, RatesArgs, SpectrumArgs, VerifyArgs,
};
use run::Status;

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_UNRELIABLE: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

/// Experiments on composite moment operators at configurable precision.
#[derive(Parser)]
#[command(name = "momentlab", version)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Working precision in bits (default from MOMENTLAB_BITS, else 256).
    #[arg(long, global = true)]
    bits: Option<u32>,
    /// Directory receiving one subdirectory per distinct run.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Disable data parallelism.
    #[arg(long, global = true)]
    sequential: bool,
    /// Recompute even when a cached result exists.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Singular values of an operator section.
    Spectrum(SpectrumArgs),
    /// Growth of the inverse Hilbert matrix norm.
    Hilbert(HilbertArgs),
    /// Kernel values on an equispaced grid.
    Kernel(KernelArgs),
    /// Modulus of continuity on a logarithmic δ grid.
    Modulus(ModulusArgs),
    /// Power-law fit and section stabilization of a spectrum.
    Rates(RatesArgs),
    /// Acceptance checks with measured against expected values.
    Verify(VerifyArgs),
}

impl From<Command> for CommandArgs {
    fn from(c: Command) -> Self {
        match c {
            Command::Spectrum(a) => CommandArgs::Spectrum(a),
            Command::Hilbert(a) => CommandArgs::Hilbert(a),
            Command::Kernel(a) => CommandArgs::Kernel(a),
            Command::Modulus(a) => CommandArgs::Modulus(a),
            Command::Rates(a) => CommandArgs::Rates(a),
            Command::Verify(a) => CommandArgs::Verify(a),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(path) => match FileConfig::load(path) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(EXIT_INVALID_CONFIG);
            }
        },
        None => FileConfig::default(),
    };
    let global = GlobalArgs {
        bits: cli.bits,
        output: cli.out.clone(),
        sequential: cli.sequential,
    };
    let resolved = match config::resolve(&global, cli.command.map(Into::into), &file) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_INVALID_CONFIG);
        }
    };
    match run::execute(&resolved, cli.force) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("artifacts: {}", outcome.dir.display());
            match outcome.status {
                Status::Ok => ExitCode::SUCCESS,
                Status::Failed => ExitCode::from(EXIT_VERIFY_FAILED),
                Status::Unreliable => {
                    eprintln!("numerical diagnostics flagged the result as unreliable");
                    ExitCode::from(EXIT_UNRELIABLE)
                }
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
