//! Attention with additive bias where the bias is supplied as low-rank
//! factors `fq · fkᵀ` and folded into the query/key channels, so the dense
//! `N×M` bias never has to be stored or streamed.
//!
//! * [`tensor`]: dense row-major matrices, SVD, seeded RNG, DBM1 files.
//! * [`attention`]: reference, tiled and factored-bias attention.
//! * [`decomposition`]: exact, SVD and neural bias factorizations.
//! * [`cost`]: closed-form HBM traffic counts.
//!
//! Numeric code is generic over [`Scalar`] (`f32`, `f64`); the aliases
//! below name the common instantiations.

pub mod attention;
pub mod cost;
pub mod decomposition;
mod error;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::{Dtype, Scalar};
pub use tensor::Matrix;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type FactoredBias64 = decomposition::FactoredBias<f64>;
pub type FactoredBias32 = decomposition::FactoredBias<f32>;
