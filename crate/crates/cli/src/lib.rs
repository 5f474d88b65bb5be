//! Command-line orchestration for the darkspin library: ingestion, dispatch,
//! deterministic result files and exit codes (0 ok, 2 input, 3 numerical).

pub mod args;
pub mod commands;
pub mod defaults;
pub mod error;
pub mod io;

use args::{Cli, Command};
use clap::Parser;
use defaults::Defaults;
use error::{CliError, CliResult};
use serde::Serialize;
use serde_json::Value;
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

/// Version of the result.json layout described by schema/result.schema.json.
pub const SCHEMA_VERSION: &str = "1";

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub defaults: Defaults,
    pub seed: u64,
    pub w_rel_tol: Option<f64>,
}

/// A CSV the run writes next to result.json.
#[derive(Debug, Clone)]
pub struct CsvOutput {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

/// Completion state recorded in result.json; anything but `Ok` exits with 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    /// A fit stopped without meeting its convergence test.
    NotConverged,
    /// A validation run exceeded its tolerance.
    ToleranceExceeded,
}

impl Status {
    pub fn from_converged(converged: bool) -> Self {
        if converged {
            Status::Ok
        } else {
            Status::NotConverged
        }
    }
}

/// What a subcommand hands back for persisting.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: Value,
    pub result: Value,
    pub warnings: Vec<String>,
    pub csv: Vec<CsvOutput>,
    pub status: Status,
    pub summary: String,
}

#[derive(Serialize)]
struct Envelope<'a> {
    schema_version: &'static str,
    tool_version: &'static str,
    subcommand: &'a str,
    status: Status,
    seed: u64,
    config: &'a Value,
    defaults: &'a Defaults,
    result: &'a Value,
    warnings: &'a [String],
    outputs: Vec<&'static str>,
}

#[derive(Serialize)]
struct Metadata<'a> {
    subcommand: &'a str,
    tool_version: &'static str,
    started_unix_s: f64,
    elapsed_s: f64,
}

pub fn to_value<T: Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Numerical(format!("cannot serialise result: {e}")))
}

fn dispatch(cmd: &Command, ctx: &Context) -> CliResult<Outcome> {
    match cmd {
        Command::FitFid(a) => commands::fid::fit(a, ctx),
        Command::SimulateFid(a) => commands::fid::simulate(a, ctx),
        Command::Oracle(a) => commands::oracle::run(a, ctx),
        Command::FitDecay(a) => commands::decay::run(a, ctx),
        Command::Nn(a) => commands::nn::run(a, ctx),
        Command::P1(a) => commands::spectra::p1(a, ctx),
        Command::Gfactor(a) => commands::spectra::gfactor(a, ctx),
        Command::Sensitivity(a) => commands::sensitivity::run(a, ctx),
        Command::Nucleation(a) => commands::nucleation::run(a, ctx),
    }
}

fn execute(cli: &Cli) -> CliResult<(Outcome, PathBuf)> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let defaults = Defaults::load(cli.defaults.as_deref())?;
    if let Some(t) = cli.w_rel_tol {
        if !(t.is_finite() && t > 0.0 && t < 1.0) {
            return Err(CliError::Input(format!("--w-rel-tol must lie in (0, 1), got {t}")));
        }
    }
    let ctx = Context { seed: cli.seed.unwrap_or(defaults.seed), defaults, w_rel_tol: cli.w_rel_tol };
    let name = cli.command.name();
    let outcome = dispatch(&cli.command, &ctx)?;
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| CliError::Input(format!("cannot create output directory {}: {e}", cli.out_dir.display())))?;
    for c in &outcome.csv {
        io::write_csv(&cli.out_dir.join(c.name), &c.header, &c.rows)?;
    }
    let result_path = cli.out_dir.join("result.json");
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        subcommand: name,
        status: outcome.status,
        seed: ctx.seed,
        config: &outcome.config,
        defaults: &ctx.defaults,
        result: &outcome.result,
        warnings: &outcome.warnings,
        outputs: outcome.csv.iter().map(|c| c.name).collect(),
    };
    io::write_json(&result_path, &env)?;
    let meta = Metadata {
        subcommand: name,
        tool_version: env!("CARGO_PKG_VERSION"),
        started_unix_s: started,
        elapsed_s: clock.elapsed().as_secs_f64(),
    };
    io::write_json(&cli.out_dir.join("metadata.json"), &meta)?;
    Ok((outcome, result_path))
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let name = cli.command.name();
    match execute(&cli) {
        Ok((outcome, path)) => {
            println!("{name}: {} [{}]", outcome.summary, path.display());
            match outcome.status {
                Status::Ok => 0,
                Status::NotConverged => {
                    eprintln!("{name}: fit did not converge; see {}", path.display());
                    3
                }
                Status::ToleranceExceeded => {
                    eprintln!("{name}: tolerance exceeded; see {}", path.display());
                    3
                }
            }
        }
        Err(e) => {
            eprintln!("{name}: {e}");
            e.exit_code()
        }
    }
}
