//! Driver behind the `flashbias` binary. Each subcommand lives in its own
//! module and returns report rows; [`run`] handles threads and output.

pub mod args;
pub mod bench;
pub mod cost;
pub mod decompose;
pub mod genspec;
pub mod report;
pub mod verify;

use args::{Cli, Command};
use report::Report;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] flashbias::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            // a diverging fit is a failed run, not a bad invocation
            CliError::Core(flashbias::Error::Training { .. }) => EXIT_PROPERTY,
            _ => EXIT_USAGE,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// What a subcommand produced: its report and whether every check held.
pub struct Outcome {
    pub report: Report,
    pub passed: bool,
}

/// Runs one parsed invocation and returns the process exit code.
pub fn run(cli: &Cli) -> CliResult<i32> {
    if cli.common.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;

    let outcome = pool.install(|| match &cli.command {
        Command::Verify(a) => verify::run(&cli.common, a),
        Command::Decompose(a) => decompose::run(&cli.common, a),
        Command::Cost(a) => cost::run(&cli.common, a),
        Command::Bench(a) => bench::run(&cli.common, a),
    })?;

    // decompose uses --out for its factor file and always reports on stdout
    let dest = match cli.command {
        Command::Decompose(_) => None,
        _ => cli.common.out.as_deref(),
    };
    outcome.report.emit(cli.common.format, dest)?;
    Ok(if outcome.passed {
        EXIT_OK
    } else {
        EXIT_PROPERTY
    })
}

/// Single SRAM size for subcommands that do not sweep it.
pub(crate) fn single_sram(common: &args::Common, default: u64) -> CliResult<u64> {
    match &common.sram_bytes {
        None => Ok(default),
        Some(s) if s.values().len() == 1 => Ok(s.values()[0]),
        Some(_) => Err(CliError::Usage(
            "only `cost` accepts a list for --sram-bytes".into(),
        )),
    }
}

pub(crate) fn to_usize(v: u64) -> CliResult<usize> {
    usize::try_from(v).map_err(|_| CliError::Usage(format!("{v} does not fit in usize")))
}
