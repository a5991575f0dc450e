//! The `firewatch` command line: batch jobs over corpora and datasets, the
//! monitor service, and the impact analysis.
//!
//! Settings come from flags, then `FIREWATCH_*` environment variables, then
//! the `[<subcommand>]` table of the `--config` file. Every batch job writes
//! only under its `--out` directory and leaves a `run_manifest.json` there.

mod commands;
mod layered;
pub mod manifest;
mod run;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use run::{OutDir, Run};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Why a subcommand stopped. Usage problems are caught before any input is
/// read.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Data(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Unwraps a setting that has no default.
pub(crate) fn need<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| usage(format!("--{flag} is required (flag, environment or config file)")))
}

#[derive(Debug, Parser)]
#[command(name = "firewatch", version, about = "Gunfire report triage: data prep, models, monitor service, impact analysis")]
struct Cli {
    /// TOML file with one table per subcommand, e.g. `[assemble]`.
    #[arg(long, global = true, env = "FIREWATCH_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,

    /// More log output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize a corpus and drop partner mentions, replies and duplicates.
    Prep(commands::prep::PrepArgs),
    /// Build the training set and the time-split holdouts.
    Assemble(commands::assemble::AssembleArgs),
    /// Fit the TF-IDF Naive Bayes baseline.
    TrainNb(commands::train::TrainArgs),
    /// Pseudo-label a pool, retrain on the union and draw the audit sample.
    Pseudo(commands::pseudo::PseudoArgs),
    /// Metrics, ROC curve and error profile for a model on a labelled set.
    Eval(commands::eval::EvalArgs),
    /// Run the monitor: poller plus HTTP API.
    Serve(commands::serve::ServeArgs),
    /// Daily panel, difference in means, OLS and NB2 fits, diagnostics.
    Impact(commands::impact::ImpactArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prep(_) => "prep",
            Command::Assemble(_) => "assemble",
            Command::TrainNb(_) => "train-nb",
            Command::Pseudo(_) => "pseudo",
            Command::Eval(_) => "eval",
            Command::Serve(_) => "serve",
            Command::Impact(_) => "impact",
        }
    }
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_env("FIREWATCH_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    let name = cli.command.name();
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut run = Run::new(name, argv);
    let result = dispatch(cli, &mut run);
    let code = match &result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("firewatch {name}: {f}");
            f.exit_code()
        }
    };
    if let Err(e) = run.finish(code, result.err().map(|f| f.to_string())) {
        eprintln!("firewatch {name}: could not write run manifest: {e:#}");
        if code == EXIT_OK {
            return EXIT_DATA;
        }
    }
    code
}

fn dispatch(cli: Cli, run: &mut Run) -> Result<(), Failure> {
    let config = layered::ConfigFile::load(cli.config.as_deref(), run)?;
    let name = cli.command.name();
    match cli.command {
        Command::Prep(a) => commands::prep::run(config.merge(name, a)?, run),
        Command::Assemble(a) => commands::assemble::run(config.merge(name, a)?, run),
        Command::TrainNb(a) => commands::train::run(config.merge(name, a)?, run),
        Command::Pseudo(a) => commands::pseudo::run(config.merge(name, a)?, run),
        Command::Eval(a) => commands::eval::run(config.merge(name, a)?, run),
        Command::Serve(a) => commands::serve::run(config.merge(name, a)?, run),
        Command::Impact(a) => commands::impact::run(config.merge(name, a)?, run),
    }
}
