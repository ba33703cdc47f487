//! Thin SVD by one-sided (Hestenes) Jacobi rotations.

use crate::scalar::Scalar;
use crate::tensor::Matrix;

const MAX_SWEEPS: usize = 80;

/// `a = u · diag(s) · vᵀ` with `s` sorted in decreasing order.
///
/// For an `n×m` input `u` is `n×k`, `v` is `m×k` with `k = min(n, m)`.
/// Columns of `u` that belong to zero singular values are zero.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> Svd<T> {
    /// Rebuilds `u_k · diag(s_k) · v_kᵀ` from the leading `k` triplets.
    pub fn reconstruct(&self, k: usize) -> Matrix<T> {
        let k = k.min(self.s.len());
        let us = Matrix::from_fn(self.u.rows(), k, |i, j| self.u.get(i, j) * self.s[j]);
        let vk = self.v.slice_cols(0..k);
        us.matmul_transposed(&vk).expect("factor widths agree")
    }
}

pub fn svd<T: Scalar>(a: &Matrix<T>) -> Svd<T> {
    if a.rows() >= a.cols() {
        jacobi_tall(a)
    } else {
        let Svd { u, s, v } = jacobi_tall(&a.transpose());
        Svd { u: v, s, v: u }
    }
}

/// Orthogonalizes the columns of a tall (`n ≥ m`) matrix.
fn jacobi_tall<T: Scalar>(a: &Matrix<T>) -> Svd<T> {
    let (n, m) = a.shape();
    // column-major working copies
    let mut w: Vec<T> = (0..m)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .map(|(i, j)| a.get(i, j))
        .collect();
    let mut v: Vec<T> = vec![T::zero(); m * m];
    for j in 0..m {
        v[j * m + j] = T::one();
    }
    let tol = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let (wp, wq) = column_pair(&mut w, n, p, q);
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for (&x, &y) in wp.iter().zip(wq.iter()) {
                    alpha = alpha + x * x;
                    beta = beta + y * y;
                    gamma = gamma + x * y;
                }
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let two = T::one() + T::one();
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(wp, wq, c, s);
                let (vp, vq) = column_pair(&mut v, m, p, q);
                rotate(vp, vq, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = (0..m)
        .map(|j| {
            w[j * n..(j + 1) * n]
                .iter()
                .map(|&x| x * x)
                .sum::<T>()
                .sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| {
        norms[y]
            .partial_cmp(&norms[x])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let s: Vec<T> = order.iter().map(|&j| norms[j]).collect();
    let u = Matrix::from_fn(n, m, |i, k| {
        let j = order[k];
        if norms[j] > T::zero() {
            w[j * n + i] / norms[j]
        } else {
            T::zero()
        }
    });
    let v = Matrix::from_fn(m, m, |i, k| v[order[k] * m + i]);
    Svd { u, s, v }
}

fn column_pair<T>(cols: &mut [T], len: usize, p: usize, q: usize) -> (&mut [T], &mut [T]) {
    debug_assert!(p < q);
    let (head, tail) = cols.split_at_mut(q * len);
    (&mut head[p * len..(p + 1) * len], &mut tail[..len])
}

#[inline]
fn rotate<T: Scalar>(x: &mut [T], y: &mut [T], c: T, s: T) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}
