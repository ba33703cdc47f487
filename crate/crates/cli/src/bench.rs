use std::hint::black_box;
use std::time::Instant;

use flashbias::attention::{
    choose_tile_sizes, flashbias_attention, reference_attention, tiled_attention, AttentionInputs,
    BiasProvider, MaskSpec,
};
use flashbias::tensor::rng::Rng;
use flashbias::{Dtype, Matrix, Scalar};
use serde::Serialize;

use crate::args::{BenchArgs, Common};
use crate::report::Report;
use crate::{single_sram, to_usize, CliError, CliResult, Outcome};

pub const DEFAULT_SRAM_BYTES: u64 = 100 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchPath {
    /// Materialized softmax over a dense bias.
    Reference,
    /// Tiled online softmax reading a dense bias.
    TiledDense,
    /// Tiled online softmax over factors folded into q and k.
    Flashbias,
}

impl BenchPath {
    pub const ALL: [BenchPath; 3] = [
        BenchPath::Reference,
        BenchPath::TiledDense,
        BenchPath::Flashbias,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    OomSkipped,
    AccountingOnly,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchResult {
    pub scenario: String,
    pub path: BenchPath,
    pub n: usize,
    pub m: usize,
    pub c: usize,
    pub r: usize,
    pub dtype: Dtype,
    pub status: Status,
    /// Median over the timed runs.
    pub wall_nanos: Option<u64>,
    pub peak_bias_bytes: u64,
    /// Frobenius norm of the output.
    pub checksum: Option<f64>,
    /// Distance to the checksum of the first dense path that ran.
    pub checksum_diff: Option<f64>,
    pub checksum_tol: Option<f64>,
    pub passed: bool,
}

/// Bias bytes a path keeps resident: the full `n×m` matrix for the dense
/// paths, the two factor matrices for the factored one.
pub fn peak_bias_bytes(path: BenchPath, n: u64, m: u64, r: u64, dtype_bytes: u64) -> u64 {
    match path {
        BenchPath::Reference | BenchPath::TiledDense => n * m * dtype_bytes,
        BenchPath::Flashbias => (n + m) * r * dtype_bytes,
    }
}

/// Bytes a run would allocate beyond its q, k, v inputs; used only to
/// decide whether to skip it.
fn working_bytes(path: BenchPath, n: u64, m: u64, r: u64, dtype_bytes: u64) -> u64 {
    let bias = peak_bias_bytes(path, n, m, r, dtype_bytes);
    match path {
        // the oracle widens the bias and keeps the weight matrix, both f64
        BenchPath::Reference => bias + 2 * n * m * 8,
        _ => bias,
    }
}

/// Allowed checksum disagreement between paths.
pub fn checksum_tolerance(dtype: Dtype, n: usize, checksum: f64) -> f64 {
    match dtype {
        Dtype::F64 if n <= 64 => 1e-10,
        Dtype::F64 => 1e-8,
        // inputs rounded to f32 before each path computes its bias
        Dtype::F32 => 1e-4 * checksum.max(1.0),
    }
}

#[derive(Serialize)]
struct BenchConfig<'a> {
    seed: u64,
    dtype: Dtype,
    sram_bytes: u64,
    threads: usize,
    #[serde(flatten)]
    args: &'a BenchArgs,
}

pub fn run(common: &Common, args: &BenchArgs) -> CliResult<Outcome> {
    let sram = single_sram(common, DEFAULT_SRAM_BYTES)?;
    if args.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let mut report = Report::new(&BenchConfig {
        seed: common.seed,
        dtype: common.dtype,
        sram_bytes: sram,
        threads: common.threads,
        args,
    })?;
    let mut passed = true;
    for &n in args.n.values() {
        for &c in args.c.values() {
            for &r in args.r.values() {
                let (n, c, r) = (to_usize(n)?, to_usize(c)?, to_usize(r)?);
                let rows = match common.dtype {
                    Dtype::F64 => scenario::<f64>(common.seed, n, c, r, sram, args)?,
                    Dtype::F32 => scenario::<f32>(common.seed, n, c, r, sram, args)?,
                };
                for row in rows {
                    passed &= row.passed;
                    report.push(&row)?;
                }
            }
        }
    }
    Ok(Outcome { report, passed })
}

/// One `n = m` point: all three paths on identical seeded inputs.
pub fn scenario<T: Scalar>(
    seed: u64,
    n: usize,
    c: usize,
    r: usize,
    sram_bytes: u64,
    args: &BenchArgs,
) -> CliResult<Vec<BenchResult>> {
    let m = n;
    let elem = T::DTYPE.size_bytes() as u64;
    let id = format!("n{n}_c{c}_r{r}");
    let row = |path, status, peak| BenchResult {
        scenario: id.clone(),
        path,
        n,
        m,
        c,
        r,
        dtype: T::DTYPE,
        status,
        wall_nanos: None,
        peak_bias_bytes: peak,
        checksum: None,
        checksum_diff: None,
        checksum_tol: None,
        passed: true,
    };

    if args.accounting_only {
        return Ok(BenchPath::ALL
            .iter()
            .map(|&p| {
                row(
                    p,
                    Status::AccountingOnly,
                    peak_bias_bytes(p, n as u64, m as u64, r as u64, elem),
                )
            })
            .collect());
    }

    let sram = to_usize(sram_bytes)?;
    let dense_tiles = choose_tile_sizes(c, 0, sram, elem as usize)?;
    let factored_tiles = choose_tile_sizes(c, r, sram, elem as usize)?;

    let mut rng = Rng::new(seed);
    let q = rng.normal_matrix(n, c).cast::<T>();
    let k = rng.normal_matrix(m, c).cast::<T>();
    let v = rng.normal_matrix(m, c).cast::<T>();
    let fq = rng.normal_matrix(n, r).cast::<T>();
    let fk = rng.normal_matrix(m, r).cast::<T>();
    let inputs = AttentionInputs::new(&q, &k, &v)?;

    let fits = |p| working_bytes(p, n as u64, m as u64, r as u64, elem) <= args.mem_cap_bytes;
    let dense: Option<Matrix<T>> = (fits(BenchPath::Reference) || fits(BenchPath::TiledDense))
        .then(|| fq.matmul_transposed(&fk).expect("factor ranks agree"));

    let mut out = Vec::new();
    let mut baseline: Option<f64> = None;
    for path in BenchPath::ALL {
        let expected = peak_bias_bytes(path, n as u64, m as u64, r as u64, elem);
        if !fits(path) {
            out.push(row(path, Status::OomSkipped, expected));
            continue;
        }
        let provider = match path {
            BenchPath::Flashbias => BiasProvider::Factored { fq: &fq, fk: &fk },
            _ => BiasProvider::Dense(dense.as_ref().expect("built when a dense path fits")),
        };
        let call = || -> flashbias::Result<Matrix<T>> {
            match path {
                BenchPath::Reference => reference_attention(&inputs, &provider, MaskSpec::None),
                BenchPath::TiledDense => {
                    tiled_attention(&inputs, &provider, MaskSpec::None, dense_tiles)
                }
                BenchPath::Flashbias => {
                    flashbias_attention(&inputs, &fq, &fk, MaskSpec::None, factored_tiles)
                }
            }
        };
        let (wall, output) = median_time(args.warmup, args.runs, call)?;
        let checksum = output.cast::<f64>().frobenius();
        let tol = checksum_tolerance(T::DTYPE, n, checksum);
        let diff = baseline.map(|b| (checksum - b).abs());
        baseline.get_or_insert(checksum);

        let mut res = row(path, Status::Ok, provider.resident_bytes() as u64);
        res.wall_nanos = Some(wall);
        res.checksum = Some(checksum);
        res.checksum_diff = diff;
        res.checksum_tol = Some(tol);
        res.passed = res.peak_bias_bytes == expected
            && wall > 0
            && checksum.is_finite()
            && diff.is_none_or(|d| d <= tol);
        out.push(res);
    }
    Ok(out)
}

/// Median wall time of `runs` calls after `warmup` untimed ones, and the
/// last output.
fn median_time<T>(
    warmup: usize,
    runs: usize,
    mut f: impl FnMut() -> flashbias::Result<T>,
) -> CliResult<(u64, T)> {
    for _ in 0..warmup {
        black_box(f()?);
    }
    let mut times = Vec::with_capacity(runs);
    let mut last = None;
    for _ in 0..runs {
        let start = Instant::now();
        let out = black_box(f()?);
        times.push(start.elapsed().as_nanos().max(1) as u64);
        last = Some(out);
    }
    times.sort_unstable();
    Ok((times[runs / 2], last.expect("runs >= 1")))
}
