//! Closed-form factorizations.

use super::{FactoredBias, Origin};
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// ALiBi as a rank-2 product: `fq_i = slope·[1, i]`, `fk_j = [−j, 1]`
/// (1-based positions), so `fq_i · fk_j = slope·(i − j)`.
pub fn decompose_alibi<T: Scalar>(n: usize, m: usize, slope: T) -> FactoredBias<T> {
    let pos = |i: usize| T::narrow((i + 1) as f64);
    let fq = Matrix::from_fn(n, 2, |i, c| if c == 0 { slope } else { slope * pos(i) });
    let fk = Matrix::from_fn(m, 2, |j, c| if c == 0 { -pos(j) } else { T::one() });
    FactoredBias::new(fq, fk, Origin::Exact, format!("alibi:{n},{m},{slope}"))
        .expect("both factors have two columns")
}

/// Squared 3-D distance as a rank-9 product. Per axis, query features
/// `[x², 1, −2x]` meet key features `[1, y², y]`; query row `i` is scaled by
/// its weight when one is given.
pub fn decompose_spatial<T: Scalar>(
    pos_q: &Matrix<T>,
    pos_k: &Matrix<T>,
    row_weights: Option<&[T]>,
) -> Result<FactoredBias<T>> {
    if pos_q.cols() != 3 || pos_k.cols() != 3 {
        return shape_err(format!(
            "spatial positions must be 3-D, got {} and {} columns",
            pos_q.cols(),
            pos_k.cols()
        ));
    }
    if let Some(w) = row_weights {
        if w.len() != pos_q.rows() {
            return shape_err(format!(
                "{} weights for {} query points",
                w.len(),
                pos_q.rows()
            ));
        }
    }
    let two = T::one() + T::one();
    let fq = Matrix::from_fn(pos_q.rows(), 9, |i, c| {
        let x = pos_q.get(i, c / 3);
        let w = row_weights.map_or(T::one(), |w| w[i]);
        w * match c % 3 {
            0 => x * x,
            1 => T::one(),
            _ => -two * x,
        }
    });
    let fk = Matrix::from_fn(pos_k.rows(), 9, |j, c| {
        let y = pos_k.get(j, c / 3);
        match c % 3 {
            0 => T::one(),
            1 => y * y,
            _ => y,
        }
    });
    FactoredBias::new(
        fq,
        fk,
        Origin::Exact,
        format!(
            "spatial:{},{}{}",
            pos_q.rows(),
            pos_k.rows(),
            if row_weights.is_some() {
                ",weighted"
            } else {
                ""
            }
        ),
    )
}
