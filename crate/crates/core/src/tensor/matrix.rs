use std::ops::Range;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return shape_err(format!(
                "{} elements cannot fill a {rows}x{cols} matrix",
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return shape_err(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copies rows `range` into a new matrix.
    pub fn slice_rows(&self, range: Range<usize>) -> Self {
        assert!(range.end <= self.rows, "row range out of bounds");
        Self {
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    /// Copies columns `range` into a new matrix.
    pub fn slice_cols(&self, range: Range<usize>) -> Self {
        assert!(range.end <= self.cols, "column range out of bounds");
        let width = range.len();
        let mut data = Vec::with_capacity(self.rows * width);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[range.clone()]);
        }
        Self {
            rows: self.rows,
            cols: width,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return shape_err(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        gemm(
            self.rows,
            self.cols,
            rhs.cols,
            &self.data,
            (self.cols, 1),
            &rhs.data,
            (rhs.cols, 1),
            &mut out.data,
        );
        Ok(out)
    }

    /// `self · rhsᵀ`, without materializing the transpose.
    pub fn matmul_transposed(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return shape_err(format!(
                "matmul {}x{} by transpose of {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        gemm(
            self.rows,
            self.cols,
            rhs.rows,
            &self.data,
            (self.cols, 1),
            &rhs.data,
            (1, rhs.cols),
            &mut out.data,
        );
        Ok(out)
    }

    /// `selfᵀ · rhs`, without materializing the transpose.
    pub fn transposed_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return shape_err(format!(
                "transpose of {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        gemm(
            self.cols,
            self.rows,
            rhs.cols,
            &self.data,
            (1, self.cols),
            &rhs.data,
            (rhs.cols, 1),
            &mut out.data,
        );
        Ok(out)
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&self) -> Self {
        let mut out = self.clone();
        for i in 0..out.rows {
            softmax_in_place(out.row_mut(i));
        }
        out
    }

    /// `[self | rhs]` along the column axis.
    pub fn concat_cols(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return shape_err(format!(
                "cannot concatenate {} rows with {} rows",
                self.rows, rhs.rows
            ));
        }
        let cols = self.cols + rhs.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(rhs.row(i));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }

    /// Largest elementwise absolute difference; shapes must agree.
    pub fn max_abs_diff(&self, rhs: &Self) -> Result<T> {
        self.check_same_shape(rhs)?;
        Ok(self
            .data
            .iter()
            .zip(&rhs.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|x| !x.is_finite()) {
            None => Ok(()),
            Some(p) => Err(Error::Validation(format!(
                "{what} has a non-finite entry at ({}, {})",
                p / self.cols.max(1),
                p % self.cols.max(1)
            ))),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|x| x * factor)
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn zip_with(&self, rhs: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_shape(rhs)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Converts every element through `f64`.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::narrow(x.widen())).collect(),
        }
    }

    pub fn check_same_shape(&self, rhs: &Self) -> Result<()> {
        if self.shape() != rhs.shape() {
            return shape_err(format!(
                "shape {}x{} differs from {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        Ok(())
    }
}

/// Stable softmax of one row, in place.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum = sum + *x;
    }
    for x in row.iter_mut() {
        *x = *x / sum;
    }
}

/// `c = a · b` for row-major `c` (m×n) with strided `a` (m×k) and `b` (k×n).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    (rsa, csa): (usize, usize),
    b: &[T],
    (rsb, csb): (usize, usize),
    c: &mut [T],
) {
    gemm_beta(m, k, n, a, (rsa, csa), b, (rsb, csb), T::zero(), c);
}

/// `c = a · b + beta · c`; strides as in [`gemm`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_beta<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    (rsa, csa): (usize, usize),
    b: &[T],
    (rsb, csb): (usize, usize),
    beta: T,
    c: &mut [T],
) {
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= last(m, k, rsa, csa), "gemm: lhs out of bounds");
    assert!(b.len() >= last(k, n, rsb, csb), "gemm: rhs out of bounds");
    assert!(c.len() >= m * n, "gemm: output out of bounds");
    // SAFETY: the asserts above keep every strided access inside its slice.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng::Rng;

    fn naive_matmul(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for t in 0..a.cols() {
                    s += a.get(i, t) * b.get(t, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    #[test]
    fn identity_times_a_is_a() {
        let mut rng = Rng::new(1);
        let a = rng.uniform_matrix(3, 4, -1.0, 1.0);
        assert_eq!(Matrix::identity(3).matmul(&a).unwrap(), a);
    }

    #[test]
    fn permutation_product() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let p = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let expected = Matrix::from_rows(&[[2.0, 1.0], [4.0, 3.0]]).unwrap();
        assert_eq!(a.matmul(&p).unwrap(), expected);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(17);
        let a = rng.uniform_matrix(17, 13, -1.0, 1.0);
        let b = rng.uniform_matrix(13, 5, -1.0, 1.0);
        let diff = a
            .matmul(&b)
            .unwrap()
            .max_abs_diff(&naive_matmul(&a, &b))
            .unwrap();
        assert!(diff <= 1e-12, "diff {diff}");
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let mut rng = Rng::new(3);
        let a = rng.uniform_matrix(9, 6, -1.0, 1.0);
        let b = rng.uniform_matrix(7, 6, -1.0, 1.0);
        let c = rng.uniform_matrix(9, 4, -1.0, 1.0);
        let abt = a.matmul_transposed(&b).unwrap();
        assert!(abt.max_abs_diff(&naive_matmul(&a, &b.transpose())).unwrap() <= 1e-14);
        let atc = a.transposed_matmul(&c).unwrap();
        assert!(atc.max_abs_diff(&naive_matmul(&a.transpose(), &c)).unwrap() <= 1e-14);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::Shape(_))));
    }

    #[test]
    fn uniform_softmax() {
        let a = Matrix::<f64>::zeros(1, 4).softmax_rows();
        assert_eq!(a.as_slice(), &[0.25; 4]);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = Rng::new(5);
        let a = rng.uniform_matrix(4, 9, -3.0, 3.0);
        for c in [-100.0, -1.5, 0.25, 42.0] {
            let shifted = a.map(|x| x + c).softmax_rows();
            assert!(shifted.max_abs_diff(&a.softmax_rows()).unwrap() <= 1e-14);
        }
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let s = Matrix::from_rows(&[[1000.0, 0.0]]).unwrap().softmax_rows();
        assert_eq!(s.get(0, 0), 1.0);
        assert!(s.get(0, 1) >= 0.0 && s.get(0, 1) < 1e-300);
    }

    #[test]
    fn concat_with_empty_block() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(a.concat_cols(&Matrix::zeros(2, 0)).unwrap(), a);
    }

    #[test]
    fn concat_small() {
        let a = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let b = Matrix::from_rows(&[[3.0], [4.0]]).unwrap();
        let c = a.concat_cols(&b).unwrap();
        assert_eq!(c, Matrix::from_rows(&[[1.0, 3.0], [2.0, 4.0]]).unwrap());
        assert_eq!(c.slice_cols(0..1), a);
        assert_eq!(c.slice_cols(1..2), b);
    }

    #[test]
    fn concat_row_mismatch() {
        let a = Matrix::<f64>::zeros(2, 1);
        let b = Matrix::<f64>::zeros(3, 1);
        assert!(matches!(a.concat_cols(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn frobenius_small_cases() {
        assert_eq!(Matrix::<f64>::zeros(3, 3).frobenius(), 0.0);
        assert_eq!(Matrix::from_rows(&[[3.0, 4.0]]).unwrap().frobenius(), 5.0);
    }

    #[test]
    fn new_rejects_bad_length() {
        assert!(Matrix::new(2, 2, vec![1.0f64; 3]).is_err());
    }
}
