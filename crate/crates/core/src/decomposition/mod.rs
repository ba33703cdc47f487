//! Routes from a bias to factors `fq: N×R`, `fk: M×R` with `fq · fkᵀ ≈ b`:
//! closed-form ([`exact`]), truncated SVD ([`svd`]) and trained factor
//! networks ([`neural`]).

pub mod exact;
pub mod fbf;
pub mod generators;
pub mod heads;
pub mod neural;
pub mod svd;

pub use exact::{decompose_alibi, decompose_spatial};
pub use generators::{generate_bias, BiasGenerator};
pub use heads::{split_heads_by_rank, HeadSplit};
pub use neural::{gradient_check, neural_decompose, MlpPair, NeuralConfig, NeuralFit};
pub use svd::{energy_profile, rank_for_energy, svd_decompose, RankTarget};

use serde::{Deserialize, Serialize};

use crate::attention::BiasProvider;
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::{svd as full_svd, Matrix};

/// Which decomposer produced a set of factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Exact,
    Svd,
    Neural,
}

impl Origin {
    pub const fn tag(self) -> u8 {
        match self {
            Origin::Exact => 0,
            Origin::Svd => 1,
            Origin::Neural => 2,
        }
    }

    pub const fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Origin::Exact),
            1 => Some(Origin::Svd),
            2 => Some(Origin::Neural),
            _ => None,
        }
    }
}

/// A bias in factored form.
#[derive(Clone, Debug, PartialEq)]
pub struct FactoredBias<T> {
    fq: Matrix<T>,
    fk: Matrix<T>,
    pub origin: Origin,
    /// Human-readable description of the generator or source.
    pub descriptor: String,
}

impl<T: Scalar> FactoredBias<T> {
    pub fn new(
        fq: Matrix<T>,
        fk: Matrix<T>,
        origin: Origin,
        descriptor: impl Into<String>,
    ) -> Result<Self> {
        if fq.cols() != fk.cols() {
            return shape_err(format!(
                "factor ranks differ: fq has {}, fk has {}",
                fq.cols(),
                fk.cols()
            ));
        }
        Ok(Self {
            fq,
            fk,
            origin,
            descriptor: descriptor.into(),
        })
    }

    pub fn fq(&self) -> &Matrix<T> {
        &self.fq
    }

    pub fn fk(&self) -> &Matrix<T> {
        &self.fk
    }

    pub fn rank(&self) -> usize {
        self.fq.cols()
    }

    pub fn n(&self) -> usize {
        self.fq.rows()
    }

    pub fn m(&self) -> usize {
        self.fk.rows()
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        self.fq
            .matmul_transposed(&self.fk)
            .expect("ranks checked at construction")
    }

    pub fn provider(&self) -> BiasProvider<'_, T> {
        BiasProvider::Factored {
            fq: &self.fq,
            fk: &self.fk,
        }
    }

    /// Widens or pads the factors with zero columns up to `rank`.
    pub fn padded_to(&self, rank: usize) -> Self {
        let r = self.rank().max(rank);
        let pad = |f: &Matrix<T>| {
            Matrix::from_fn(f.rows(), r, |i, j| {
                if j < f.cols() {
                    f.get(i, j)
                } else {
                    T::zero()
                }
            })
        };
        Self {
            fq: pad(&self.fq),
            fk: pad(&self.fk),
            origin: self.origin,
            descriptor: self.descriptor.clone(),
        }
    }
}

/// Quality of a factorization against its target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub rank_used: usize,
    /// Fraction of the target's squared singular values captured by its
    /// best rank-`rank_used` approximation.
    pub energy_retained: f64,
    pub max_abs_err: f64,
    /// `‖fq·fkᵀ − b‖_F / ‖b‖_F`; the absolute error when `b = 0`.
    pub rel_fro_err: f64,
}

/// Compares `fb` with `target`, computing the target's spectrum.
pub fn reconstruction_report<T: Scalar>(
    fb: &FactoredBias<T>,
    target: &Matrix<T>,
) -> Result<DecompositionReport> {
    if (fb.n(), fb.m()) != target.shape() {
        return shape_err(format!(
            "factors describe {}x{}, target is {}x{}",
            fb.n(),
            fb.m(),
            target.rows(),
            target.cols()
        ));
    }
    let spectrum: Vec<f64> = full_svd(&target.cast::<f64>()).s;
    report_with_spectrum(fb, target, &spectrum)
}

pub(crate) fn report_with_spectrum<T: Scalar>(
    fb: &FactoredBias<T>,
    target: &Matrix<T>,
    spectrum: &[f64],
) -> Result<DecompositionReport> {
    let recon = fb.reconstruct().cast::<f64>();
    let target = target.cast::<f64>();
    let diff = recon.sub(&target)?;
    let target_norm = target.frobenius();
    let diff_norm = diff.frobenius();
    let profile = energy_profile(spectrum);
    let energy = match fb.rank() {
        0 => 0.0,
        r => profile
            .get(r - 1)
            .or(profile.last())
            .copied()
            .unwrap_or(1.0),
    };
    Ok(DecompositionReport {
        rank_used: fb.rank(),
        energy_retained: energy,
        max_abs_err: diff.max_abs(),
        rel_fro_err: if target_norm > 0.0 {
            diff_norm / target_norm
        } else {
            diff_norm
        },
    })
}
