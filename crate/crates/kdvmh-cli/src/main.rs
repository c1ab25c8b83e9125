//! `kdvmh`: orbit runs, MH comparisons, verification suites and frequency sweeps.

mod commands;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Suite;
use config::ExperimentConfig;
use error::CliError;
use output::{to_pretty, write_atomic, Format};

#[derive(Parser)]
#[command(name = "kdvmh", version, about = "Lattice KdV/MKdV maps and their modified Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config and KDVMH_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate the map and tabulate coordinates and invariants.
    Orbit(Common),
    /// Compare BCH, explicit-series and closed-form modified Hamiltonians over the grading list.
    MhCompare(Common),
    /// Run residual checks; exit 4 if any exceeds its tolerance.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
    },
    /// Frequencies along a scaled family of seed points.
    FreqSweep(Common),
}

fn prepare(c: &Common) -> Result<(ExperimentConfig, PathBuf, Format), CliError> {
    let cfg = ExperimentConfig::load(&c.config)?;
    let dir = cfg.out_dir(c.out.as_deref());
    let format = c.format.or(cfg.format).unwrap_or(Format::Csv);
    Ok((cfg, dir, format))
}

fn emit(dir: &Path, stem: &str, format: Format, body: &str) -> Result<(), CliError> {
    let path = write_atomic(dir, &format!("{stem}.{}", format.ext()), body)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Orbit(c) => {
            let (cfg, dir, format) = prepare(&c)?;
            let (table, meta) = commands::orbit(&cfg)?;
            eprintln!("max relative invariant drift {}", meta["max_relative_drift"]);
            emit(&dir, "orbit", format, &table.render(format, meta))
        }
        Command::MhCompare(c) => {
            let (cfg, dir, format) = prepare(&c)?;
            let (table, meta) = commands::mh_compare(&cfg)?;
            emit(&dir, "mh_compare", format, &table.render(format, meta))
        }
        Command::Verify { common, suite } => {
            let (cfg, dir, format) = prepare(&common)?;
            let (checks, meta) = commands::verify(&cfg, suite)?;
            let body = match format {
                Format::Csv => commands::verify_table(&checks).to_csv(),
                Format::Json => to_pretty(&commands::verify_json(&checks, meta)),
            };
            emit(&dir, &format!("verify_{}", suite.name()), format, &body)?;
            match commands::worst(&checks) {
                Some(w) if !checks.iter().all(commands::Check::passed) => Err(CliError::Verify(format!(
                    "worst offender {}/{}: residual {:e} > tolerance {:e}",
                    w.suite, w.name, w.residual, w.tolerance
                ))),
                w => {
                    if let Some(w) = w {
                        eprintln!("all checks passed; largest {}/{} residual {:e} (tolerance {:e})", w.suite, w.name, w.residual, w.tolerance);
                    }
                    Ok(())
                }
            }
        }
        Command::FreqSweep(c) => {
            let (cfg, dir, format) = prepare(&c)?;
            let (table, meta) = commands::freq_sweep(&cfg)?;
            emit(&dir, "freq_sweep", format, &table.render(format, meta))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kdvmh: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
