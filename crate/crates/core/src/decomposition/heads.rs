//! Partitioning a stack of per-head biases into low-rank and dense subsets.

use super::svd::rank_for_energy;
use super::{FactoredBias, Origin};
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{svd, Matrix};

#[derive(Clone, Debug)]
pub struct HeadSplit<T> {
    /// Low-rank heads with factors padded to `common_rank`.
    pub low: Vec<(usize, FactoredBias<T>)>,
    /// Heads kept as dense biases.
    pub dense: Vec<usize>,
    /// Shared factor width of the low subset; a multiple of 8, or 0 when the
    /// low subset is empty.
    pub common_rank: usize,
    /// Energy-threshold rank of every head, in input order.
    pub head_ranks: Vec<usize>,
}

/// A head joins the low subset iff the rank needed to keep `tau` of its
/// energy is at most `r_max`. The low subset shares one factor width: the
/// largest such rank, rounded up to a multiple of 8.
pub fn split_heads_by_rank<T: Scalar>(
    biases: &[Matrix<T>],
    tau: f64,
    r_max: usize,
) -> Result<HeadSplit<T>> {
    let first = biases
        .first()
        .ok_or_else(|| Error::Validation("no heads to split".into()))?;
    if let Some((h, b)) = biases
        .iter()
        .enumerate()
        .find(|(_, b)| b.shape() != first.shape())
    {
        return shape_err(format!(
            "head {h} is {}x{}, head 0 is {}x{}",
            b.rows(),
            b.cols(),
            first.rows(),
            first.cols()
        ));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Validation(format!(
            "energy threshold {tau} outside (0, 1]"
        )));
    }

    let spectra: Vec<_> = biases
        .iter()
        .map(|b| {
            b.ensure_finite("head bias")?;
            Ok(svd(&b.cast::<f64>()))
        })
        .collect::<Result<_>>()?;
    let head_ranks: Vec<usize> = spectra.iter().map(|d| rank_for_energy(&d.s, tau)).collect();

    let low_heads: Vec<usize> = (0..biases.len())
        .filter(|&h| head_ranks[h] <= r_max)
        .collect();
    let dense = (0..biases.len())
        .filter(|&h| head_ranks[h] > r_max)
        .collect();
    let common_rank = low_heads
        .iter()
        .map(|&h| head_ranks[h])
        .max()
        .map_or(0, |r| r.div_ceil(8) * 8);

    let low = low_heads
        .into_iter()
        .map(|h| {
            let d = &spectra[h];
            let keep = common_rank.min(d.s.len());
            let (n, m) = biases[h].shape();
            let fq = Matrix::from_fn(n, common_rank, |i, j| {
                if j < keep {
                    T::narrow(d.u.get(i, j) * d.s[j].sqrt())
                } else {
                    T::zero()
                }
            });
            let fk = Matrix::from_fn(m, common_rank, |i, j| {
                if j < keep {
                    T::narrow(d.v.get(i, j) * d.s[j].sqrt())
                } else {
                    T::zero()
                }
            });
            let fb =
                FactoredBias::new(fq, fk, Origin::Svd, format!("head {h}, rank {common_rank}"))?;
            Ok((h, fb))
        })
        .collect::<Result<_>>()?;

    Ok(HeadSplit {
        low,
        dense,
        common_rank,
        head_ranks,
    })
}
