use super::{AttentionInputs, BiasProvider, MaskSpec, MASKED_LOGIT};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Row-stochastic attention weights `softmax(q kᵀ/√C + b + mask)`, in f64.
///
/// A factored bias is materialized as `fq · fkᵀ` first.
pub fn reference_weights<T: Scalar>(
    inputs: &AttentionInputs<'_, T>,
    bias: &BiasProvider<'_, T>,
    mask: MaskSpec,
) -> Result<Matrix<f64>> {
    let (n, m) = (inputs.n(), inputs.m());
    bias.validate(n, m)?;
    mask.validate(n, m)?;

    let scale = 1.0 / (inputs.channels() as f64).sqrt();
    let q: Matrix<f64> = inputs.q().cast();
    let k: Matrix<f64> = inputs.k().cast();
    let mut logits = q.matmul_transposed(&k)?.scale(scale);
    if let Some(b) = bias.materialize() {
        logits = logits.add(&b)?;
    }
    if mask == MaskSpec::Causal {
        for i in 0..n {
            for x in &mut logits.row_mut(i)[i + 1..] {
                *x = MASKED_LOGIT;
            }
        }
    }
    Ok(logits.softmax_rows())
}

/// `softmax(q kᵀ/√C + b + mask) · v`, materializing every intermediate.
pub fn reference_attention<T: Scalar>(
    inputs: &AttentionInputs<'_, T>,
    bias: &BiasProvider<'_, T>,
    mask: MaskSpec,
) -> Result<Matrix<T>> {
    let weights = reference_weights(inputs, bias, mask)?;
    Ok(weights.matmul(&inputs.v().cast())?.cast())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::tensor::rng::Rng;

    /// Explicit double loop with scalar exponentials.
    #[allow(clippy::needless_range_loop)]
    fn scalar_loop_attention(
        q: &Matrix<f64>,
        k: &Matrix<f64>,
        v: &Matrix<f64>,
        b: Option<&Matrix<f64>>,
        causal: bool,
    ) -> Matrix<f64> {
        let (n, m, c) = (q.rows(), k.rows(), q.cols());
        let mut out = Matrix::zeros(n, c);
        for i in 0..n {
            let mut logits = vec![0.0; m];
            for j in 0..m {
                let mut dot = 0.0;
                for t in 0..c {
                    dot += q.get(i, t) * k.get(j, t);
                }
                logits[j] = dot / (c as f64).sqrt() + b.map_or(0.0, |b| b.get(i, j));
            }
            let visible = if causal { i + 1 } else { m };
            let max = logits[..visible].iter().cloned().fold(f64::MIN, f64::max);
            let mut denom = 0.0;
            for j in 0..visible {
                denom += (logits[j] - max).exp();
            }
            for j in 0..visible {
                let w = (logits[j] - max).exp() / denom;
                for t in 0..c {
                    let cur = out.get(i, t);
                    out.set(i, t, cur + w * v.get(j, t));
                }
            }
        }
        out
    }

    #[test]
    fn single_token_returns_value() {
        let q = Matrix::from_rows(&[[0.3, -2.0]]).unwrap();
        let k = Matrix::from_rows(&[[1.5, 4.0]]).unwrap();
        let v = Matrix::from_rows(&[[7.0, 7.0]]).unwrap();
        let inputs = AttentionInputs::new(&q, &k, &v).unwrap();
        let out = reference_attention(&inputs, &BiasProvider::None, MaskSpec::None).unwrap();
        assert_eq!(out.as_slice(), &[7.0, 7.0]);

        let v1 = Matrix::from_rows(&[[7.0]]).unwrap();
        let q1 = Matrix::from_rows(&[[0.1]]).unwrap();
        let k1 = Matrix::from_rows(&[[-9.0]]).unwrap();
        let inputs = AttentionInputs::new(&q1, &k1, &v1).unwrap();
        let out = reference_attention(&inputs, &BiasProvider::None, MaskSpec::Causal).unwrap();
        assert_eq!(out.as_slice(), &[7.0]);
    }

    #[test]
    fn zero_dense_bias_equals_no_bias() {
        let mut rng = Rng::new(8);
        let q = rng.normal_matrix(6, 3);
        let k = rng.normal_matrix(5, 3);
        let v = rng.normal_matrix(5, 3);
        let zero = Matrix::zeros(6, 5);
        let inputs = AttentionInputs::new(&q, &k, &v).unwrap();
        let a = reference_attention(&inputs, &BiasProvider::None, MaskSpec::None).unwrap();
        let b = reference_attention(&inputs, &BiasProvider::Dense(&zero), MaskSpec::None).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() <= 1e-14);
    }

    #[test]
    fn matches_scalar_loop_oracle() {
        let mut rng = Rng::new(44);
        let q = rng.normal_matrix(4, 2);
        let k = rng.normal_matrix(4, 2);
        let v = rng.normal_matrix(4, 2);
        let b = rng.normal_matrix(4, 4);
        let inputs = AttentionInputs::new(&q, &k, &v).unwrap();
        for (mask, causal) in [(MaskSpec::None, false), (MaskSpec::Causal, true)] {
            let out = reference_attention(&inputs, &BiasProvider::Dense(&b), mask).unwrap();
            let oracle = scalar_loop_attention(&q, &k, &v, Some(&b), causal);
            assert!(out.max_abs_diff(&oracle).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn weights_are_row_stochastic() {
        let mut rng = Rng::new(12);
        let q = rng.uniform_matrix(9, 4, -30.0, 30.0);
        let k = rng.uniform_matrix(9, 4, -30.0, 30.0);
        let v = rng.normal_matrix(9, 4);
        let b = rng.uniform_matrix(9, 9, -1e3, 1e3);
        let inputs = AttentionInputs::new(&q, &k, &v).unwrap();
        for mask in [MaskSpec::None, MaskSpec::Causal] {
            let w = reference_weights(&inputs, &BiasProvider::Dense(&b), mask).unwrap();
            for i in 0..9 {
                let row = w.row(i);
                assert!(row.iter().all(|&x| x >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn shape_and_mask_errors() {
        let q = Matrix::<f64>::zeros(3, 2);
        let k = Matrix::<f64>::zeros(4, 2);
        let bad_v = Matrix::<f64>::zeros(4, 3);
        assert!(matches!(
            AttentionInputs::new(&q, &k, &bad_v),
            Err(Error::Shape(_))
        ));

        let v = Matrix::<f64>::zeros(4, 2);
        let inputs = AttentionInputs::new(&q, &k, &v).unwrap();
        assert!(matches!(
            reference_attention(&inputs, &BiasProvider::None, MaskSpec::Causal),
            Err(Error::Mask(_))
        ));
        let wrong = Matrix::<f64>::zeros(4, 3);
        assert!(matches!(
            reference_attention(&inputs, &BiasProvider::Dense(&wrong), MaskSpec::None),
            Err(Error::Shape(_))
        ));
    }
}
