//! Truncated-SVD factorization of stored bias matrices.

use super::{report_with_spectrum, DecompositionReport, FactoredBias, Origin};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{svd, Matrix};

/// How many singular triplets to keep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RankTarget {
    Rank(usize),
    /// Smallest rank whose retained energy reaches the threshold.
    Energy(f64),
}

/// Cumulative energy `Σ_{i≤k} σᵢ² / Σ σᵢ²` for every `k`; all ones for a
/// zero spectrum.
pub fn energy_profile(spectrum: &[f64]) -> Vec<f64> {
    let mut cumulative = Vec::with_capacity(spectrum.len());
    let mut acc = 0.0;
    for s in spectrum {
        acc += s * s;
        cumulative.push(acc);
    }
    if acc == 0.0 {
        return vec![1.0; spectrum.len()];
    }
    cumulative.iter().map(|c| c / acc).collect()
}

/// Smallest `k ≥ 1` with `energy(k) ≥ tau`.
pub fn rank_for_energy(spectrum: &[f64], tau: f64) -> usize {
    let profile = energy_profile(spectrum);
    profile
        .iter()
        .position(|&e| e >= tau)
        .map_or(profile.len(), |p| p + 1)
        .max(1)
}

/// Factors `fq = U_k·√Σ_k`, `fk = V_k·√Σ_k` of the rank-`k` truncation.
pub fn svd_decompose<T: Scalar>(
    b: &Matrix<T>,
    target: RankTarget,
) -> Result<(FactoredBias<T>, DecompositionReport)> {
    b.ensure_finite("bias")?;
    let full_rank = b.rows().min(b.cols());
    if full_rank == 0 {
        return Err(Error::Validation("cannot decompose an empty bias".into()));
    }
    match target {
        RankTarget::Rank(r) if r == 0 || r > full_rank => {
            return Err(Error::Validation(format!(
                "rank {r} outside 1..={full_rank}"
            )))
        }
        RankTarget::Energy(tau) if !(tau > 0.0 && tau <= 1.0) => {
            return Err(Error::Validation(format!(
                "energy threshold {tau} outside (0, 1]"
            )))
        }
        _ => {}
    }

    let d = svd(&b.cast::<f64>());
    let k = match target {
        RankTarget::Rank(r) => r,
        RankTarget::Energy(tau) => rank_for_energy(&d.s, tau),
    };
    let root: Vec<f64> = d.s[..k].iter().map(|s| s.sqrt()).collect();
    let fq = Matrix::from_fn(b.rows(), k, |i, j| T::narrow(d.u.get(i, j) * root[j]));
    let fk = Matrix::from_fn(b.cols(), k, |i, j| T::narrow(d.v.get(i, j) * root[j]));
    let fb = FactoredBias::new(
        fq,
        fk,
        Origin::Svd,
        format!("svd:{}x{},rank={k}", b.rows(), b.cols()),
    )?;
    let report = report_with_spectrum(&fb, b, &d.s)?;
    Ok((fb, report))
}
