use rayon::prelude::*;

use super::{AttentionInputs, BiasProvider, MaskSpec, TileConfig, MASKED_LOGIT};
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{gemm, gemm_beta, Matrix};

/// Online-softmax attention over `b_q × b_kv` tiles.
///
/// A dense bias is read one tile at a time; a factored bias is expanded
/// per tile as `fq_blk · fk_blkᵀ`. Under a causal mask, key blocks entirely
/// above the diagonal are never touched.
pub fn tiled_attention<T: Scalar>(
    inputs: &AttentionInputs<'_, T>,
    bias: &BiasProvider<'_, T>,
    mask: MaskSpec,
    tiles: TileConfig,
) -> Result<Matrix<T>> {
    let (n, m) = (inputs.n(), inputs.m());
    bias.validate(n, m)?;
    mask.validate(n, m)?;
    let scale = 1.0 / (inputs.channels() as f64).sqrt();
    Ok(stream(
        inputs.q(),
        inputs.k(),
        inputs.v(),
        bias,
        mask,
        tiles,
        scale,
    ))
}

/// Attention with bias `fq · fkᵀ` computed as plain attention on the
/// channel-concatenated `[q | √C·fq]` and `[k | fk]`, keeping the
/// `1/√C` logit scale of the original channel count.
pub fn flashbias_attention<T: Scalar>(
    inputs: &AttentionInputs<'_, T>,
    fq: &Matrix<T>,
    fk: &Matrix<T>,
    mask: MaskSpec,
    tiles: TileConfig,
) -> Result<Matrix<T>> {
    let (n, m) = (inputs.n(), inputs.m());
    BiasProvider::Factored { fq, fk }.validate(n, m)?;
    mask.validate(n, m)?;
    if fq.cols() != fk.cols() {
        return shape_err("factor ranks differ");
    }
    let c = inputs.channels() as f64;
    let q_ext = inputs.q().concat_cols(&fq.scale(T::narrow(c.sqrt())))?;
    let k_ext = inputs.k().concat_cols(fk)?;
    Ok(stream(
        &q_ext,
        &k_ext,
        inputs.v(),
        &BiasProvider::None,
        mask,
        tiles,
        1.0 / c.sqrt(),
    ))
}

/// Shared streaming kernel. `q` and `k` may be wider than `v`.
fn stream<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    bias: &BiasProvider<'_, T>,
    mask: MaskSpec,
    tiles: TileConfig,
    scale: f64,
) -> Matrix<T> {
    let (n, m, c) = (q.rows(), k.rows(), v.cols());
    let mut out = Matrix::<T>::zeros(n, c);
    if n == 0 || c == 0 {
        return out;
    }
    let b_q = tiles.b_q.clamp(1, n);
    let b_kv = tiles.b_kv.clamp(1, m.max(1));
    let kernel = Kernel {
        q,
        k,
        v,
        bias,
        causal: mask == MaskSpec::Causal,
        scale,
        b_kv,
    };
    out.as_mut_slice()
        .par_chunks_mut(b_q * c)
        .enumerate()
        .for_each(|(blk, rows)| kernel.query_block(blk * b_q, rows));
    out
}

struct Kernel<'a, T> {
    q: &'a Matrix<T>,
    k: &'a Matrix<T>,
    v: &'a Matrix<T>,
    bias: &'a BiasProvider<'a, T>,
    causal: bool,
    scale: f64,
    b_kv: usize,
}

impl<T: Scalar> Kernel<'_, T> {
    /// Processes queries `i0..i0 + out.len()/C` and writes their outputs.
    fn query_block(&self, i0: usize, out: &mut [T]) {
        let c = self.v.cols();
        let d = self.q.cols();
        let m = self.k.rows();
        let rows = out.len() / c;
        let last_row = i0 + rows - 1;

        let qb = widen_rows(self.q, i0, rows);
        let fqb = match self.bias {
            BiasProvider::Factored { fq, .. } => Some(widen_rows(fq, i0, rows)),
            _ => None,
        };
        let mut row_max = vec![MASKED_LOGIT; rows];
        let mut denom = vec![0.0f64; rows];
        let mut acc = vec![0.0f64; rows * c];
        let mut s = vec![0.0f64; rows * self.b_kv];

        let mut j0 = 0;
        while j0 < m {
            if self.causal && j0 > last_row {
                break;
            }
            let cols = self.b_kv.min(m - j0);
            let kb = widen_rows(self.k, j0, cols);
            let vb = widen_rows(self.v, j0, cols);
            let s = &mut s[..rows * cols];

            gemm(rows, d, cols, &qb, (d, 1), &kb, (1, d), s);
            for x in s.iter_mut() {
                *x *= self.scale;
            }
            match self.bias {
                BiasProvider::None => {}
                BiasProvider::Dense(b) => {
                    for r in 0..rows {
                        let src = &b.row(i0 + r)[j0..j0 + cols];
                        for (x, &bij) in s[r * cols..(r + 1) * cols].iter_mut().zip(src) {
                            *x += bij.widen();
                        }
                    }
                }
                BiasProvider::Factored { fk, .. } => {
                    let rank = fk.cols();
                    let fkb = widen_rows(fk, j0, cols);
                    let fqb = fqb.as_deref().expect("query factors loaded");
                    gemm_beta(rows, rank, cols, fqb, (rank, 1), &fkb, (1, rank), 1.0, s);
                }
            }
            if self.causal && j0 + cols - 1 > i0 {
                for r in 0..rows {
                    let i = i0 + r;
                    for (cc, x) in s[r * cols..(r + 1) * cols].iter_mut().enumerate() {
                        if j0 + cc > i {
                            *x = MASKED_LOGIT;
                        }
                    }
                }
            }

            for r in 0..rows {
                let srow = &mut s[r * cols..(r + 1) * cols];
                let block_max = srow.iter().fold(MASKED_LOGIT, |a, &x| a.max(x));
                let new_max = row_max[r].max(block_max);
                let correction = (row_max[r] - new_max).exp();
                let mut block_sum = 0.0;
                for x in srow.iter_mut() {
                    *x = (*x - new_max).exp();
                    block_sum += *x;
                }
                denom[r] = denom[r] * correction + block_sum;
                row_max[r] = new_max;
                for a in &mut acc[r * c..(r + 1) * c] {
                    *a *= correction;
                }
            }
            gemm_beta(rows, cols, c, s, (cols, 1), &vb, (c, 1), 1.0, &mut acc);
            j0 += cols;
        }

        for r in 0..rows {
            let inv = 1.0 / denom[r];
            for (o, &a) in out[r * c..(r + 1) * c]
                .iter_mut()
                .zip(&acc[r * c..(r + 1) * c])
            {
                *o = T::narrow(a * inv);
            }
        }
    }
}

/// Loads rows `start..start+count` of `a` as a contiguous f64 tile.
fn widen_rows<T: Scalar>(a: &Matrix<T>, start: usize, count: usize) -> Vec<f64> {
    let w = a.cols();
    a.as_slice()[start * w..(start + count) * w]
        .iter()
        .map(|x| x.widen())
        .collect()
}
