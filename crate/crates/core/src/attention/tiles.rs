use crate::error::{Error, Result};

/// Query/key block sizes for the streaming kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileConfig {
    pub b_q: usize,
    pub b_kv: usize,
    /// SRAM capacity the sizes were derived from, when chosen automatically.
    pub sram_budget_bytes: Option<usize>,
}

impl TileConfig {
    pub fn new(b_q: usize, b_kv: usize) -> Result<Self> {
        if b_q == 0 || b_kv == 0 {
            return Err(Error::Config(format!(
                "block sizes must be positive, got b_q={b_q}, b_kv={b_kv}"
            )));
        }
        Ok(Self {
            b_q,
            b_kv,
            sram_budget_bytes: None,
        })
    }
}

/// Rounds down to a multiple of 8 when `x ≥ 8`; smaller sizes stay exact.
pub fn round_block(x: usize) -> usize {
    if x >= 8 {
        x / 8 * 8
    } else {
        x
    }
}

/// Sizes blocks so that query, key, value and output tiles of width
/// `c + r` fit in `sram_bytes`:
/// `b_q = ⌊S / (4·dtype·(C+R))⌋`, `b_kv = min(b_q, C+R)`, both then
/// passed through [`round_block`].
pub fn choose_tile_sizes(
    c: usize,
    r: usize,
    sram_bytes: usize,
    dtype_bytes: usize,
) -> Result<TileConfig> {
    let width = c + r;
    if width == 0 || dtype_bytes == 0 {
        return Err(Error::Config(
            "channel width and element size must be positive".into(),
        ));
    }
    let row_bytes = 4 * dtype_bytes * width;
    if sram_bytes < row_bytes {
        return Err(Error::Config(format!(
            "{sram_bytes} B of SRAM cannot hold one row of four {width}-wide tiles ({row_bytes} B)"
        )));
    }
    let raw = sram_bytes / row_bytes;
    Ok(TileConfig {
        b_q: round_block(raw),
        b_kv: round_block(raw.min(width)),
        sram_budget_bytes: Some(sram_bytes),
    })
}
