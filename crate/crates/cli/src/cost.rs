use flashbias::cost::{count, Algorithm, CostParams, CostReport};
use serde::Serialize;

use crate::args::{Common, CostArgs};
use crate::report::Report;
use crate::{CliResult, Outcome};

pub const DEFAULT_SRAM_BYTES: u64 = 100 * 1024;

/// The fixed reference point appended to every table: N = M = 16384,
/// C = R = 64, a 100 KiB SRAM and 2-byte elements.
pub const REFERENCE_POINT: (u64, u64, u64, u64, u64, u64) = (16_384, 16_384, 64, 64, 100 * 1024, 2);

#[derive(Clone, Debug, Serialize)]
pub struct CostRow {
    #[serde(flatten)]
    pub report: CostReport,
    /// Baseline reads over this row's reads; the baseline is FlashAttention
    /// streaming a dense bias at the same point.
    pub reads_ratio: f64,
    pub total_ratio: f64,
    pub scenario: &'static str,
}

#[derive(Serialize)]
struct CostConfig<'a> {
    seed: u64,
    dtype: flashbias::Dtype,
    elem_bytes: u64,
    sram_bytes: Vec<u64>,
    #[serde(flatten)]
    args: &'a CostArgs,
}

/// Every algorithm at one point, with ratios against the dense-bias baseline.
pub fn rows_for_point(
    n: u64,
    m: u64,
    c: u64,
    r: u64,
    sram_bytes: u64,
    dtype_bytes: u64,
    scenario: &'static str,
) -> CliResult<Vec<CostRow>> {
    let at = |algorithm| {
        count(&CostParams {
            n,
            m,
            c,
            r,
            sram_bytes,
            dtype_bytes,
            algorithm,
        })
    };
    let base = at(Algorithm::FlashDenseBias)?;
    Algorithm::ALL
        .iter()
        .map(|&alg| {
            let report = at(alg)?;
            Ok(CostRow {
                report,
                reads_ratio: base.reads as f64 / report.reads as f64,
                total_ratio: base.total as f64 / report.total as f64,
                scenario,
            })
        })
        .collect()
}

pub fn run(common: &Common, args: &CostArgs) -> CliResult<Outcome> {
    let elem_bytes = args.elem_bytes.unwrap_or(common.dtype.size_bytes() as u64);
    let srams = common
        .sram_bytes
        .as_ref()
        .map_or_else(|| vec![DEFAULT_SRAM_BYTES], |s| s.values().to_vec());
    let mut report = Report::new(&CostConfig {
        seed: common.seed,
        dtype: common.dtype,
        elem_bytes,
        sram_bytes: srams.clone(),
        args,
    })?;

    for &sram in &srams {
        for &n in args.n.values() {
            let ms = args
                .m
                .as_ref()
                .map_or_else(|| vec![n], |s| s.values().to_vec());
            for m in ms {
                for &c in args.c.values() {
                    for &r in args.r.values() {
                        for row in rows_for_point(n, m, c, r, sram, elem_bytes, "sweep")? {
                            report.push(&row)?;
                        }
                    }
                }
            }
        }
    }
    let (n, m, c, r, sram, dtype) = REFERENCE_POINT;
    for row in rows_for_point(n, m, c, r, sram, dtype, "reference_point")? {
        report.push(&row)?;
    }
    Ok(Outcome {
        report,
        passed: true,
    })
}
