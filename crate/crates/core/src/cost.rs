//! Closed-form HBM traffic counts, in elements.
//!
//! Counting convention:
//! * Standard attention reads `q, k, v`, writes the `N×M` score matrix and
//!   reads it back for the softmax, then writes and re-reads the
//!   probability matrix, and writes `o`:
//!   reads `(N + 2M)·C + 2NM`, writes `2NM + NC`.
//! * Streaming kernels use the blocks of [`choose_tile_sizes`]. With
//!   `t = ⌈N / b_q⌉` query blocks, `q` is read once, every query block
//!   re-reads all keys and values, and `o` is written once. FlashAttention
//!   reads `NC + t·2MC` (+ `NM` for a dense bias). FlashBias reads the
//!   concatenated `[q | √C·fq]` once, the concatenated `[k | fk]` of width
//!   `C + R` per block and `v` at width `C` per block:
//!   `N(C+R) + t·M(C+R) + t·MC`.
//! * Softmax running statistics stay on chip and are not counted.

use serde::{Deserialize, Serialize};

use crate::attention::{choose_tile_sizes, round_block, TileConfig};
use crate::error::{Error, Result};

/// Element size used by [`theorem1_ratio`] when turning `β` into bytes.
pub const THEOREM1_DTYPE_BYTES: usize = 2;

/// Constant in `count_flashbias ≥ κ · corollary1_bound` that holds on every
/// configuration the tiled count accepts.
pub const COROLLARY1_KAPPA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Standard,
    Flash,
    FlashDenseBias,
    FlashBias,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Standard,
        Algorithm::Flash,
        Algorithm::FlashDenseBias,
        Algorithm::FlashBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Standard => "standard",
            Algorithm::Flash => "flash",
            Algorithm::FlashDenseBias => "flash_dense_bias",
            Algorithm::FlashBias => "flash_bias",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostParams {
    pub n: u64,
    pub m: u64,
    pub c: u64,
    pub r: u64,
    pub sram_bytes: u64,
    pub dtype_bytes: u64,
    pub algorithm: Algorithm,
}

impl CostParams {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.c == 0 || self.dtype_bytes == 0 {
            return Err(Error::Validation(format!(
                "n, m, c and dtype_bytes must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    fn with(&self, algorithm: Algorithm) -> Self {
        Self { algorithm, ..*self }
    }
}

/// One row of the cost table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub algorithm: Algorithm,
    pub n: u64,
    pub m: u64,
    pub c: u64,
    pub r: u64,
    pub sram: u64,
    pub dtype: u64,
    pub reads: u64,
    pub writes: u64,
    pub total: u64,
    pub b_q: u64,
    pub b_kv: u64,
    pub t: u64,
}

impl CostReport {
    pub const CSV_HEADER: &'static str =
        "algorithm,n,m,c,r,sram,dtype,reads,writes,total,b_q,b_kv,t";

    fn new(p: &CostParams, reads: u64, writes: u64, (b_q, b_kv, t): (u64, u64, u64)) -> Self {
        Self {
            algorithm: p.algorithm,
            n: p.n,
            m: p.m,
            c: p.c,
            r: p.r,
            sram: p.sram_bytes,
            dtype: p.dtype_bytes,
            reads,
            writes,
            total: reads + writes,
            b_q,
            b_kv,
            t,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.algorithm.name(),
            self.n,
            self.m,
            self.c,
            self.r,
            self.sram,
            self.dtype,
            self.reads,
            self.writes,
            self.total,
            self.b_q,
            self.b_kv,
            self.t
        )
    }
}

/// Dispatches on `p.algorithm`.
pub fn count(p: &CostParams) -> Result<CostReport> {
    match p.algorithm {
        Algorithm::Standard => count_standard(p),
        Algorithm::Flash => count_flash(p, false),
        Algorithm::FlashDenseBias => count_flash(p, true),
        Algorithm::FlashBias => count_flashbias(p),
    }
}

pub fn count_standard(p: &CostParams) -> Result<CostReport> {
    p.validate()?;
    let (n, m, c) = (p.n, p.m, p.c);
    let reads = (n + 2 * m) * c + 2 * n * m;
    let writes = 2 * n * m + n * c;
    Ok(CostReport::new(
        &p.with(Algorithm::Standard),
        reads,
        writes,
        (n, m, 1),
    ))
}

pub fn count_flash(p: &CostParams, dense_bias: bool) -> Result<CostReport> {
    p.validate()?;
    let (n, m, c) = (p.n, p.m, p.c);
    let tiles = choose_tile_sizes(c as usize, 0, p.sram_bytes as usize, p.dtype_bytes as usize)?;
    let t = n.div_ceil(tiles.b_q as u64);
    let bias_reads = if dense_bias { n * m } else { 0 };
    let reads = n * c + t * 2 * m * c + bias_reads;
    let algorithm = if dense_bias {
        Algorithm::FlashDenseBias
    } else {
        Algorithm::Flash
    };
    Ok(CostReport::new(
        &p.with(algorithm),
        reads,
        n * c,
        blocks(tiles, t),
    ))
}

pub fn count_flashbias(p: &CostParams) -> Result<CostReport> {
    p.validate()?;
    let (n, m, c, r) = (p.n, p.m, p.c, p.r);
    let tiles = choose_tile_sizes(
        c as usize,
        r as usize,
        p.sram_bytes as usize,
        p.dtype_bytes as usize,
    )?;
    let t = n.div_ceil(tiles.b_q as u64);
    let reads = n * (c + r) + t * m * (c + r) + t * m * c;
    Ok(CostReport::new(
        &p.with(Algorithm::FlashBias),
        reads,
        n * c,
        blocks(tiles, t),
    ))
}

fn blocks(tiles: TileConfig, t: u64) -> (u64, u64, u64) {
    (tiles.b_q as u64, tiles.b_kv as u64, t)
}

/// `count_standard / count_flash` for self-attention with `C = α·N` and
/// `S = β·N·C·dtype` bytes.
///
/// Below four rows of SRAM the query block is held at one row instead of
/// rejecting the configuration, so the whole `β ∈ [1/N, 1]` range evaluates.
pub fn theorem1_ratio(alpha: f64, beta: f64, n: u64) -> Result<f64> {
    if n == 0 || !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::Validation(format!(
            "need n ≥ 1 and α > 0, got n={n}, α={alpha}"
        )));
    }
    if !(beta >= 1.0 / n as f64 && beta <= 1.0) {
        return Err(Error::Validation(format!("β={beta} outside [1/{n}, 1]")));
    }
    let c = ((alpha * n as f64).round() as u64).max(1);
    let dtype = THEOREM1_DTYPE_BYTES as u64;
    let sram = (beta * (n * c * dtype) as f64).round() as u64;
    let p = CostParams {
        n,
        m: n,
        c,
        r: 0,
        sram_bytes: sram,
        dtype_bytes: dtype,
        algorithm: Algorithm::Flash,
    };
    let standard = count_standard(&p)?.total;
    let b_q = round_block((sram / (4 * dtype * c)) as usize).max(1) as u64;
    let t = n.div_ceil(b_q);
    let flash = (n * c + t * 2 * n * c) + n * c;
    Ok(standard as f64 / flash as f64)
}

/// `N·M·(C² + R²) / S` with `S` in elements: the traffic no exact
/// algorithm can beat asymptotically.
pub fn corollary1_bound(p: &CostParams) -> Result<f64> {
    p.validate()?;
    let width = p.c + p.r;
    let lo = width * p.dtype_bytes;
    let hi = p.n * width * p.dtype_bytes;
    if p.sram_bytes < lo || p.sram_bytes > hi {
        return Err(Error::Validation(format!(
            "SRAM {} B outside [{lo}, {hi}] B",
            p.sram_bytes
        )));
    }
    let s_elems = p.sram_bytes as f64 / p.dtype_bytes as f64;
    Ok((p.n * p.m) as f64 * (p.c * p.c + p.r * p.r) as f64 / s_elems)
}
