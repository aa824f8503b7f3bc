//! `switchstab`: stability analysis of randomly switched linear systems from
//! the command line.

mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use switchstab_core::Error;

use scenario::Scenario;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "switchstab",
    version,
    about = "Stability analysis of randomly switched linear systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Options {
    /// Scenario file (JSON).
    #[arg(long, global = true, conflicts_with = "builtin")]
    scenario: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long, global = true)]
    builtin: Option<String>,
    /// Master seed; overrides the scenario's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for report files; nothing is written without it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derived series, solvability verdict and triangularization diagnostics.
    CheckSolvable,
    /// Simultaneous triangularization and the closed-form exponents.
    Triangularize,
    /// QR Lyapunov and Liao-type exponents along sampled signals.
    Exponents,
    /// Monte-Carlo stability over sampled signals.
    Mc,
    /// Perturbation-threshold sweep.
    Sweep,
    /// Sweep of the input bound of a control-product perturbation.
    ControlSweep,
    /// Print the resolved scenario as JSON.
    Dump,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
    Refused(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "bad input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Refused(m) => write!(f, "refused: {m}"),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Refused(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidInput(_)
            | Error::DimensionMismatch { .. }
            | Error::SymbolOutOfRange { .. }
            | Error::HorizonTooShort { .. }
            | Error::PrefixExhausted { .. }
            | Error::InsufficientSeries { .. } => CliError::Input(msg),
            Error::NotSolvable { .. } | Error::StarConditionFails { .. } | Error::GrowthBoundViolated { .. } => {
                CliError::Refused(msg)
            }
            Error::SingularInput { .. }
            | Error::NoConvergence { .. }
            | Error::NumericalBreakdown(_)
            | Error::NonFinite { .. }
            | Error::NotTriangular { .. } => CliError::Numerical(msg),
        }
    }
}

fn load(opts: &Options) -> Result<Scenario, CliError> {
    let mut sc = match (&opts.scenario, &opts.builtin) {
        (Some(path), None) => Scenario::load(path)?,
        (None, Some(name)) => scenario::builtin(name)?,
        _ => return Err(CliError::Input("pass exactly one of --scenario or --builtin".into())),
    };
    if let Some(seed) = opts.seed {
        sc.seed = seed;
    }
    Ok(sc)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.opts.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot configure thread pool: {e}")))?;
    }
    let sc = load(&cli.opts)?;
    let out = commands::Output::new(cli.opts.out.clone(), cli.opts.format)?;
    match cli.command {
        Command::CheckSolvable => commands::check_solvable(&sc, &out),
        Command::Triangularize => commands::triangularize(&sc, &out),
        Command::Exponents => commands::exponents(&sc, &out),
        Command::Mc => commands::mc(&sc, &out),
        Command::Sweep => commands::sweep(&sc, &out),
        Command::ControlSweep => commands::control_sweep(&sc, &out),
        Command::Dump => {
            print!("{}", sc.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("switchstab: {e}");
            ExitCode::from(e.code())
        }
    }
}
