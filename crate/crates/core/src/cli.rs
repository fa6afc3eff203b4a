//! Command-line front end: `run`, `validate`, `oracle` and `list`.
//!
//! Exit codes: 0 success, 1 invalid input (spec, arguments), 2 runtime error
//! (I/O, failing oracle).

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::harness::oracles::{run_oracle, ORACLES};
use crate::harness::{run_experiment, write_outputs, ExperimentId, ExperimentSpec};
use crate::scenario::SWEEPABLE_FIELDS;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "d2d-underlay",
    version,
    about = "D2D-underlaid massive MIMO uplink experiments"
)]
struct Cli {
    /// Root seed, overriding `config.rng_seed` of the spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trial count, overriding the spec.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// CSV output path, overriding the spec.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment spec and write CSV plus manifest.
    Run { spec: PathBuf },
    /// Check an experiment spec without running it.
    Validate { spec: PathBuf },
    /// Run a brute-force oracle suite (`all` runs every one).
    Oracle { name: String },
    /// List experiments, sweepable fields and oracles.
    List,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidSpec { .. }
        | Error::InvalidConfig { .. }
        | Error::InfeasiblePzf(_)
        | Error::Json(_) => EXIT_INVALID,
        _ => EXIT_RUNTIME,
    }
}

fn load_spec(cli: &Cli, path: &PathBuf) -> Result<ExperimentSpec, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut spec = ExperimentSpec::from_json(&text)?;
    if let Some(seed) = cli.seed {
        spec.config.rng_seed = seed;
    }
    if let Some(trials) = cli.trials {
        spec.trials = trials;
    }
    if let Some(out) = &cli.out {
        spec.output = Some(out.clone());
    }
    spec.validate()?;
    Ok(spec)
}

fn execute(cli: &Cli) -> Result<i32, Error> {
    match &cli.command {
        Command::Run { spec } => {
            let spec = load_spec(cli, spec)?;
            let mut result = run_experiment(&spec)?;
            let (csv, manifest) = write_outputs(&mut result, &spec.default_output())?;
            println!(
                "{}: {} rows -> {} ({})",
                spec.experiment.name(),
                result.rows.len(),
                csv.display(),
                manifest.display()
            );
            Ok(EXIT_OK)
        }
        Command::Validate { spec } => {
            let spec = load_spec(cli, spec)?;
            println!(
                "ok: {} sweeping {} over {} values, {} trials",
                spec.experiment.name(),
                spec.sweep.variable,
                spec.sweep.values.len(),
                spec.trials
            );
            Ok(EXIT_OK)
        }
        Command::Oracle { name } => {
            let seed = cli.seed.unwrap_or(1);
            let names: Vec<&str> = if name == "all" {
                ORACLES.iter().map(|(n, _)| *n).collect()
            } else {
                vec![name.as_str()]
            };
            let mut all_passed = true;
            for n in names {
                let report = run_oracle(n, seed)?;
                println!("{report}");
                all_passed &= report.passed;
            }
            Ok(if all_passed { EXIT_OK } else { EXIT_RUNTIME })
        }
        Command::List => {
            println!("experiments:");
            for id in ExperimentId::ALL {
                println!("  {:<8} {}", id.name(), id.description());
            }
            println!("sweepable fields:");
            for (field, integer) in SWEEPABLE_FIELDS {
                println!("  {field}{}", if *integer { " (integer)" } else { "" });
            }
            println!("oracles:");
            for (name, what) in ORACLES {
                println!("  {name:<22} {what}");
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&parsed) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
