//! Dense bias generators for the structured biases the decomposers target.

use std::f64::consts::FRAC_PI_2;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::rng::Rng;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub enum BiasGenerator<T> {
    /// `slope · (i − j)` over 1-based positions.
    Alibi { n: usize, m: usize, slope: T },
    /// `w_i · ‖x_q,i − x_k,j‖²` over 3-D points; `w_i = 1` when absent.
    SpatialDist3D {
        pos_q: Matrix<T>,
        pos_k: Matrix<T>,
        row_weights: Option<Vec<T>>,
    },
    /// `1 / (‖x_i − x_j‖² + eps·[i = j])` over one 2-D point set.
    Gravity2D { pos: Matrix<T>, eps: T },
    /// Great-circle (haversine) distance between `(lat, lon)` rows, radians.
    Spherical { latlon: Matrix<T> },
    /// `A · Bᵀ` with standard normal `A: n×r`, `B: m×r`.
    RandomLowRank {
        n: usize,
        m: usize,
        r: usize,
        seed: u64,
    },
    /// A stored parameter matrix, used as-is.
    ParameterBias { matrix: Matrix<T> },
}

impl<T: Scalar> BiasGenerator<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            BiasGenerator::Alibi { .. } | BiasGenerator::RandomLowRank { .. } => Ok(()),
            BiasGenerator::SpatialDist3D {
                pos_q,
                pos_k,
                row_weights,
            } => {
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
                            "{} row weights for {} query points",
                            w.len(),
                            pos_q.rows()
                        ));
                    }
                }
                Ok(())
            }
            BiasGenerator::Gravity2D { pos, eps } => {
                if pos.cols() != 2 {
                    return shape_err(format!("gravity positions must be 2-D, got {}", pos.cols()));
                }
                if eps.is_nan() || *eps <= T::zero() {
                    return Err(Error::Validation(format!(
                        "gravity eps must be positive, got {eps}"
                    )));
                }
                for i in 0..pos.rows() {
                    for j in i + 1..pos.rows() {
                        if sq_dist(pos.row(i), pos.row(j)) == T::zero() {
                            return Err(Error::Validation(format!(
                                "gravity points {i} and {j} coincide"
                            )));
                        }
                    }
                }
                Ok(())
            }
            BiasGenerator::Spherical { latlon } => {
                if latlon.cols() != 2 {
                    return shape_err(format!(
                        "spherical inputs are (lat, lon), got {} columns",
                        latlon.cols()
                    ));
                }
                let limit = T::narrow(FRAC_PI_2);
                for i in 0..latlon.rows() {
                    let lat = latlon.get(i, 0);
                    if !(lat >= -limit && lat <= limit) {
                        return Err(Error::Validation(format!(
                            "latitude {lat} of point {i} is outside [-π/2, π/2]"
                        )));
                    }
                }
                Ok(())
            }
            BiasGenerator::ParameterBias { matrix } => matrix.ensure_finite("parameter bias"),
        }
    }
}

pub fn generate_bias<T: Scalar>(g: &BiasGenerator<T>) -> Result<Matrix<T>> {
    g.validate()?;
    Ok(match g {
        &BiasGenerator::Alibi { n, m, slope } => Matrix::from_fn(n, m, |i, j| {
            slope * (T::narrow((i + 1) as f64) - T::narrow((j + 1) as f64))
        }),
        BiasGenerator::SpatialDist3D {
            pos_q,
            pos_k,
            row_weights,
        } => Matrix::from_fn(pos_q.rows(), pos_k.rows(), |i, j| {
            let w = row_weights.as_ref().map_or(T::one(), |w| w[i]);
            w * sq_dist(pos_q.row(i), pos_k.row(j))
        }),
        BiasGenerator::Gravity2D { pos, eps } => Matrix::from_fn(pos.rows(), pos.rows(), |i, j| {
            let d = sq_dist(pos.row(i), pos.row(j));
            T::one() / if i == j { d + *eps } else { d }
        }),
        BiasGenerator::Spherical { latlon } => {
            Matrix::from_fn(latlon.rows(), latlon.rows(), |i, j| {
                haversine(latlon.row(i), latlon.row(j))
            })
        }
        &BiasGenerator::RandomLowRank { n, m, r, seed } => {
            let mut rng = Rng::new(seed);
            let a = rng.normal_matrix(n, r);
            let b = rng.normal_matrix(m, r);
            a.matmul_transposed(&b)?.cast()
        }
        BiasGenerator::ParameterBias { matrix } => matrix.clone(),
    })
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn haversine<T: Scalar>(p: &[T], q: &[T]) -> T {
    let two = T::one() + T::one();
    let half_dlat = ((p[0] - q[0]) / two).sin();
    let half_dlon = ((p[1] - q[1]) / two).sin();
    let h = half_dlat * half_dlat + p[0].cos() * q[0].cos() * half_dlon * half_dlon;
    two * h.max(T::zero()).min(T::one()).sqrt().asin()
}
