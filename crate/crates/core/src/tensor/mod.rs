//! Dense matrices, seeded randomness and the DBM1 file format.

pub mod io;
mod matrix;
pub mod rng;
mod svd;

pub(crate) use matrix::{gemm, gemm_beta};
pub use matrix::{softmax_in_place, Matrix};
pub use svd::{svd, Svd};
