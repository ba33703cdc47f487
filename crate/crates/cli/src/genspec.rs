//! `name:arg,arg,...` generator specs.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;

use flashbias::decomposition::BiasGenerator;
use flashbias::tensor::rng::Rng;
use flashbias::{Matrix, Scalar};

use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub enum GenSpec {
    Alibi { n: usize, m: usize, slope: f64 },
    Spatial { n: usize, m: usize },
    Gravity { n: usize, eps: f64 },
    Spherical { n: usize },
    LowRank { n: usize, m: usize, r: usize },
}

/// A generator together with the coordinates its bias is a function of,
/// which the neural decomposer takes as inputs.
pub struct Generated<T> {
    pub generator: BiasGenerator<T>,
    pub coords: Option<(Matrix<T>, Matrix<T>)>,
}

impl GenSpec {
    pub fn parse(spec: &str) -> CliResult<Self> {
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let args: Vec<&str> = rest
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        let bad = |msg: &str| CliError::Usage(format!("generator `{spec}`: {msg}"));
        let count = |i: usize| -> CliResult<usize> {
            match args[i].parse::<usize>() {
                Ok(0) | Err(_) => Err(bad(&format!("`{}` is not a positive integer", args[i]))),
                Ok(v) => Ok(v),
            }
        };
        let real = |i: usize| -> CliResult<f64> {
            args[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(&format!("`{}` is not a finite number", args[i])))
        };
        let arity = |lo: usize, hi: usize| -> CliResult<()> {
            if args.len() < lo || args.len() > hi {
                return Err(bad(&format!(
                    "expected {lo}..={hi} arguments, got {}",
                    args.len()
                )));
            }
            Ok(())
        };

        match name {
            "alibi" => {
                arity(2, 3)?;
                let slope = if args.len() == 3 { real(2)? } else { 1.0 };
                Ok(GenSpec::Alibi {
                    n: count(0)?,
                    m: count(1)?,
                    slope,
                })
            }
            "spatial" => {
                arity(2, 2)?;
                Ok(GenSpec::Spatial {
                    n: count(0)?,
                    m: count(1)?,
                })
            }
            "gravity" => {
                arity(1, 2)?;
                let eps = if args.len() == 2 { real(1)? } else { 0.01 };
                Ok(GenSpec::Gravity { n: count(0)?, eps })
            }
            "spherical" => {
                arity(1, 1)?;
                Ok(GenSpec::Spherical { n: count(0)? })
            }
            "lowrank" => {
                arity(3, 3)?;
                Ok(GenSpec::LowRank {
                    n: count(0)?,
                    m: count(1)?,
                    r: count(2)?,
                })
            }
            other => Err(bad(&format!(
                "unknown generator `{other}` (alibi, spatial, gravity, spherical, lowrank)"
            ))),
        }
    }

    /// Draws any random coordinates from `seed`.
    pub fn build<T: Scalar>(&self, seed: u64) -> Generated<T> {
        let mut rng = Rng::new(seed);
        let narrow = |m: Matrix<f64>| m.cast::<T>();
        match *self {
            GenSpec::Alibi { n, m, slope } => Generated {
                generator: BiasGenerator::Alibi {
                    n,
                    m,
                    slope: T::narrow(slope),
                },
                coords: Some((positions(n), positions(m))),
            },
            GenSpec::Spatial { n, m } => {
                let pos_q = narrow(rng.uniform_matrix(n, 3, -1.0, 1.0));
                let pos_k = narrow(rng.uniform_matrix(m, 3, -1.0, 1.0));
                Generated {
                    coords: Some((pos_q.clone(), pos_k.clone())),
                    generator: BiasGenerator::SpatialDist3D {
                        pos_q,
                        pos_k,
                        row_weights: None,
                    },
                }
            }
            GenSpec::Gravity { n, eps } => {
                let pos = narrow(rng.uniform_matrix(n, 2, 0.0, 1.0));
                Generated {
                    coords: Some((pos.clone(), pos.clone())),
                    generator: BiasGenerator::Gravity2D {
                        pos,
                        eps: T::narrow(eps),
                    },
                }
            }
            GenSpec::Spherical { n } => {
                let latlon = narrow(spherical_points(&mut rng, n));
                Generated {
                    coords: Some((latlon.clone(), latlon.clone())),
                    generator: BiasGenerator::Spherical { latlon },
                }
            }
            GenSpec::LowRank { n, m, r } => Generated {
                generator: BiasGenerator::RandomLowRank { n, m, r, seed },
                coords: None,
            },
        }
    }
}

impl fmt::Display for GenSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenSpec::Alibi { n, m, slope } => write!(f, "alibi:{n},{m},{slope}"),
            GenSpec::Spatial { n, m } => write!(f, "spatial:{n},{m}"),
            GenSpec::Gravity { n, eps } => write!(f, "gravity:{n},{eps}"),
            GenSpec::Spherical { n } => write!(f, "spherical:{n}"),
            GenSpec::LowRank { n, m, r } => write!(f, "lowrank:{n},{m},{r}"),
        }
    }
}

/// Latitude uniform in [−π/2, π/2], longitude uniform in [0, 2π).
pub fn spherical_points(rng: &mut Rng, n: usize) -> Matrix<f64> {
    let mut out = Matrix::zeros(n, 2);
    for i in 0..n {
        out.set(i, 0, rng.uniform(-FRAC_PI_2, FRAC_PI_2));
        out.set(i, 1, rng.uniform(0.0, TAU));
    }
    out
}

/// 1-based positions as a one-column matrix.
fn positions<T: Scalar>(n: usize) -> Matrix<T> {
    Matrix::from_fn(n, 1, |i, _| T::narrow((i + 1) as f64))
}
