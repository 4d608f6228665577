//! `kdlab`: command-line front end for the KD-distribution toolkit.
//!
//! Exit codes: 0 success, 1 validation error (flags, files, schemas),
//! 2 numerical self-check failure. All randomized commands require an
//! explicit seed, and identical invocations produce byte-identical output.

mod commands;
mod error;
mod io;
mod scenario;

use clap::{Parser, Subcommand};

use crate::error::CliResult;

#[derive(Parser)]
#[command(
    name = "kdlab",
    version,
    about = "Kirkwood-Dirac quasi-probability toolkit",
    propagate_version = true
)]
struct Cli {
    /// Worker thread cap for parallel sweeps (else KDLAB_THREADS, else 1).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Standard or extended KD distribution of a state.
    Kd(commands::KdParams),
    /// Non-positivity and coherence witnesses.
    Witness(commands::WitnessParams),
    /// Support-uncertainty diagram and incompatibility scan.
    Geometry(commands::GeometryParams),
    /// Weak values and Gaussian-meter simulation.
    Weak(commands::WeakParams),
    /// Ancilla-circuit estimation of a KD entry.
    Circuit(commands::CircuitParams),
    /// Fisher information with optional post-selection.
    Metrology(commands::MetrologyParams),
    /// Work distributions and fluctuation-theorem checks.
    Thermo(commands::ThermoParams),
    /// OTOC and non-positivity trace on a spin chain.
    Otoc(commands::OtocParams),
    /// Leggett-Garg, consistent-histories, and KCBS computations.
    Foundations {
        #[command(subcommand)]
        task: FoundationsTask,
    },
    /// Execute a scenario file.
    Run { path: String },
    /// Validate a scenario file without executing it.
    Validate { path: String },
}

#[derive(Subcommand)]
enum FoundationsTask {
    /// KCBS pentagram correlator, direct and via the 5-extended KD form.
    Kcbs(commands::FoundationsParams),
    /// Leggett-Garg correlator for three qubit observables.
    Lg(commands::FoundationsParams),
    /// Mach-Zehnder consistent-histories example.
    Mz(commands::FoundationsParams),
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let threads = io::thread_count(cli.threads)?;
    match cli.command {
        Command::Kd(p) => commands::run_kd(&p, false),
        Command::Witness(p) => commands::run_witness(&p, false),
        Command::Geometry(p) => commands::run_geometry(&p, false),
        Command::Weak(p) => commands::run_weak(&p, false),
        Command::Circuit(p) => commands::run_circuit(&p, false),
        Command::Metrology(p) => commands::run_metrology(&p, false),
        Command::Thermo(p) => commands::run_thermo(&p, false),
        Command::Otoc(p) => commands::run_otoc(&p, threads, false),
        Command::Foundations { task } => {
            let (name, mut p) = match task {
                FoundationsTask::Kcbs(p) => ("kcbs", p),
                FoundationsTask::Lg(p) => ("lg", p),
                FoundationsTask::Mz(p) => ("mz", p),
            };
            p.task = name.to_string();
            commands::run_foundations(&p, false)
        }
        Command::Run { path } => scenario::run(&path, threads),
        Command::Validate { path } => scenario::validate(&path),
    }
}

fn main() {
    // Exit code 2 is reserved for numerical self-check failures, so flag
    // mistakes (which clap reports with code 2 by default) are mapped to 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = dispatch(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
