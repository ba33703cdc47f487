//! Attention with additive bias: dense reference, tiled online-softmax
//! streaming, and the factored-bias path that folds `fq · fkᵀ` into the
//! query/key channels.

mod reference;
mod tiled;
mod tiles;

pub use reference::{reference_attention, reference_weights};
pub use tiled::{flashbias_attention, tiled_attention};
pub use tiles::{choose_tile_sizes, round_block, TileConfig};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Logit assigned to masked positions. Finite so that max-subtraction never
/// produces `inf - inf`.
pub const MASKED_LOGIT: f64 = f64::MIN;

/// Queries (`N×C`), keys and values (`M×C`).
#[derive(Clone, Copy, Debug)]
pub struct AttentionInputs<'a, T> {
    q: &'a Matrix<T>,
    k: &'a Matrix<T>,
    v: &'a Matrix<T>,
}

impl<'a, T: Scalar> AttentionInputs<'a, T> {
    pub fn new(q: &'a Matrix<T>, k: &'a Matrix<T>, v: &'a Matrix<T>) -> Result<Self> {
        let c = q.cols();
        if k.cols() != c || v.cols() != c {
            return shape_err(format!(
                "channel mismatch: q has {c}, k has {}, v has {}",
                k.cols(),
                v.cols()
            ));
        }
        if k.rows() != v.rows() {
            return shape_err(format!("k has {} rows but v has {}", k.rows(), v.rows()));
        }
        if c == 0 {
            return shape_err("attention needs at least one channel");
        }
        Ok(Self { q, k, v })
    }

    pub fn q(&self) -> &'a Matrix<T> {
        self.q
    }

    pub fn k(&self) -> &'a Matrix<T> {
        self.k
    }

    pub fn v(&self) -> &'a Matrix<T> {
        self.v
    }

    /// Query count `N`.
    pub fn n(&self) -> usize {
        self.q.rows()
    }

    /// Key/value count `M`.
    pub fn m(&self) -> usize {
        self.k.rows()
    }

    /// Channel count `C`.
    pub fn channels(&self) -> usize {
        self.q.cols()
    }
}

/// Additive attention bias, either absent, dense `N×M`, or factored as
/// `fq · fkᵀ` with `fq: N×R`, `fk: M×R`.
#[derive(Clone, Copy, Debug)]
pub enum BiasProvider<'a, T> {
    None,
    Dense(&'a Matrix<T>),
    Factored {
        fq: &'a Matrix<T>,
        fk: &'a Matrix<T>,
    },
}

impl<T: Scalar> BiasProvider<'_, T> {
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        match *self {
            BiasProvider::None => Ok(()),
            BiasProvider::Dense(b) => {
                if b.shape() != (n, m) {
                    return shape_err(format!(
                        "dense bias is {}x{}, attention needs {n}x{m}",
                        b.rows(),
                        b.cols()
                    ));
                }
                Ok(())
            }
            BiasProvider::Factored { fq, fk } => {
                if fq.rows() != n || fk.rows() != m {
                    return shape_err(format!(
                        "factors have {} and {} rows, attention needs {n} and {m}",
                        fq.rows(),
                        fk.rows()
                    ));
                }
                if fq.cols() != fk.cols() || fq.cols() == 0 {
                    return shape_err(format!(
                        "factor ranks {} and {} must agree and be positive",
                        fq.cols(),
                        fk.cols()
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn rank(&self) -> Option<usize> {
        match self {
            BiasProvider::Factored { fq, .. } => Some(fq.cols()),
            _ => None,
        }
    }

    /// Bytes of bias data this provider keeps resident.
    pub fn resident_bytes(&self) -> usize {
        let elem = T::DTYPE.size_bytes();
        match self {
            BiasProvider::None => 0,
            BiasProvider::Dense(b) => b.as_slice().len() * elem,
            BiasProvider::Factored { fq, fk } => (fq.as_slice().len() + fk.as_slice().len()) * elem,
        }
    }

    /// Dense `N×M` bias in f64, if any.
    pub fn materialize(&self) -> Option<Matrix<f64>> {
        match *self {
            BiasProvider::None => None,
            BiasProvider::Dense(b) => Some(b.cast()),
            BiasProvider::Factored { fq, fk } => Some(
                fq.cast::<f64>()
                    .matmul_transposed(&fk.cast())
                    .expect("validated factor ranks"),
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MaskSpec {
    #[default]
    None,
    /// Key `j` is hidden from query `i` whenever `j > i`.
    Causal,
}

impl MaskSpec {
    pub(crate) fn validate(self, n: usize, m: usize) -> Result<()> {
        if self == MaskSpec::Causal && n != m {
            return Err(Error::Mask(format!(
                "causal mask needs a square problem, got {n} queries and {m} keys"
            )));
        }
        Ok(())
    }
}
