use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flashbias::Dtype;
use serde::Serialize;

const GRAMMAR_HELP: &str = "\
Generator specs (--gen) take the form name:arg,arg,... with positional numeric args:
  alibi:N,M[,SLOPE]     slope·(i − j) over 1-based positions (slope defaults to 1)
  spatial:N,M           squared distances between N and M seeded points in [-1,1]^3
  gravity:N[,EPS]       1/(‖xi − xj‖² + EPS·[i=j]) over N seeded points in [0,1]^2 (EPS 0.01)
  spherical:N           haversine distances between N seeded (lat, lon) points
  lowrank:N,M,R         A·Bᵀ with seeded standard normal A: N×R, B: M×R

Sweeps (--n, --m, --c, --r, --sram-bytes) are comma-separated lists.

Exit status: 0 success, 1 property failure, 2 usage or configuration error.";

#[derive(Parser, Debug, Serialize)]
#[command(
    name = "flashbias",
    version,
    about = "Factored-bias attention: checks, decompositions, IO cost tables and benchmarks"
)]
#[command(after_help = GRAMMAR_HELP)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Seed for every generated input.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Element type of matrices and factor files.
    #[arg(long, global = true, default_value = "f64", value_parser = parse_dtype)]
    pub dtype: Dtype,
    /// On-chip memory size in bytes (a list for `cost`).
    #[arg(long = "sram-bytes", global = true, value_parser = parse_sweep)]
    pub sram_bytes: Option<Sweep>,
    /// Report destination; for `decompose`, the factor file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for block-parallel attention.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Run the equivalence, decomposition, gradient and cost-model property suites.
    Verify(VerifyArgs),
    /// Factor a generated or stored bias matrix and write it as FBF1.
    Decompose(DecomposeArgs),
    /// Tabulate modelled HBM reads and writes per algorithm.
    Cost(CostArgs),
    /// Time reference, dense-tiled and factored attention and account bias memory.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    /// Sequence lengths for the attention suites.
    #[arg(long, value_parser = parse_sweep, default_value = "8,33,64,128")]
    pub n: Sweep,
    /// Random instances per attention property.
    #[arg(long, default_value_t = 24)]
    pub instances: usize,
    /// Fault injection: adds eps·j to column j of the oracle's dense bias.
    #[arg(long = "perturb-bias", value_name = "EPS")]
    pub perturb_bias: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Svd,
    Neural,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DecomposeArgs {
    /// Generator spec, see below.
    #[arg(
        long = "gen",
        value_name = "SPEC",
        conflicts_with = "input",
        required_unless_present = "input"
    )]
    pub generator: Option<String>,
    /// DBM1 matrix file.
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Target rank (svd, neural).
    #[arg(long, conflicts_with = "energy")]
    pub rank: Option<usize>,
    /// Energy to retain (svd).
    #[arg(long)]
    pub energy: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 256)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Loss trace CSV; defaults to `<out>.loss.csv` when --out is given.
    #[arg(long = "loss-trace", value_name = "PATH")]
    pub loss_trace: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CostArgs {
    #[arg(long, value_parser = parse_sweep, default_value = "1024,4096,16384")]
    pub n: Sweep,
    /// Key counts; defaults to the query counts.
    #[arg(long, value_parser = parse_sweep)]
    pub m: Option<Sweep>,
    #[arg(long, value_parser = parse_sweep, default_value = "64")]
    pub c: Sweep,
    #[arg(long, value_parser = parse_sweep, default_value = "64")]
    pub r: Sweep,
    /// Element size in bytes; overrides the size implied by --dtype.
    #[arg(long = "elem-bytes")]
    pub elem_bytes: Option<u64>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BenchArgs {
    #[arg(long, value_parser = parse_sweep, default_value = "64,256,1024")]
    pub n: Sweep,
    #[arg(long, value_parser = parse_sweep, default_value = "64")]
    pub c: Sweep,
    #[arg(long, value_parser = parse_sweep, default_value = "16")]
    pub r: Sweep,
    #[arg(long, default_value_t = 11)]
    pub runs: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    /// Dense bias paths above this many bias bytes are skipped.
    #[arg(long = "mem-cap-bytes", default_value_t = 1 << 30)]
    pub mem_cap_bytes: u64,
    /// Report bias memory only; nothing is allocated or timed.
    #[arg(long = "accounting-only")]
    pub accounting_only: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// A nonempty comma-separated list of positive integers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Sweep(pub Vec<u64>);

impl Sweep {
    pub fn values(&self) -> &[u64] {
        &self.0
    }
}

pub fn parse_sweep(s: &str) -> Result<Sweep, String> {
    let values = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| match t.parse::<u64>() {
            Ok(0) => Err(format!("sweep value `{t}` must be positive")),
            Ok(v) => Ok(v),
            Err(e) => Err(format!("bad sweep value `{t}`: {e}")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("empty sweep".into());
    }
    Ok(Sweep(values))
}

fn parse_dtype(s: &str) -> Result<Dtype, String> {
    s.parse()
}
