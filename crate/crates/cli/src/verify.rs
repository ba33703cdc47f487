//! Seeded property suites over the attention engine, the decomposers and
//! the cost model. A property fails when its measured error exceeds its
//! tolerance.

use flashbias::attention::{
    flashbias_attention, reference_attention, reference_weights, tiled_attention, AttentionInputs,
    BiasProvider, MaskSpec, TileConfig,
};
use flashbias::cost::{corollary1_bound, count, Algorithm, CostParams, COROLLARY1_KAPPA};
use flashbias::decomposition::{
    decompose_alibi, decompose_spatial, energy_profile, generate_bias, gradient_check,
    svd_decompose, BiasGenerator, MlpPair, RankTarget,
};
use flashbias::tensor::rng::Rng;
use flashbias::tensor::svd;
use flashbias::{Dtype, Matrix, Scalar};
use serde::Serialize;

use crate::args::{Common, VerifyArgs};
use crate::report::Report;
use crate::{single_sram, to_usize, CliResult, Outcome};

/// Large enough for the factored path to undercut the dense-bias path over
/// the whole grid at 2-byte elements.
pub const DEFAULT_SRAM_BYTES: u64 = 1 << 20;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub property: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl Check {
    fn at_most(
        suite: &'static str,
        property: &'static str,
        measured: f64,
        tolerance: f64,
        cases: usize,
    ) -> Self {
        Self {
            suite,
            property,
            passed: measured <= tolerance,
            measured,
            tolerance,
            cases,
        }
    }
}

#[derive(Serialize)]
struct VerifyConfig<'a> {
    #[serde(flatten)]
    common: &'a Common,
    #[serde(flatten)]
    args: &'a VerifyArgs,
    cost_sram_bytes: u64,
}

pub fn run(common: &Common, args: &VerifyArgs) -> CliResult<Outcome> {
    let sram = single_sram(common, DEFAULT_SRAM_BYTES)?;
    let ns: Vec<usize> = args
        .n
        .values()
        .iter()
        .map(|&n| to_usize(n))
        .collect::<CliResult<_>>()?;
    let mut checks = match common.dtype {
        Dtype::F64 => attention_suite::<f64>(common.seed, &ns, args.instances, args.perturb_bias)?,
        Dtype::F32 => attention_suite::<f32>(common.seed, &ns, args.instances, args.perturb_bias)?,
    };
    checks.extend(decomposition_suite(common.seed)?);
    checks.extend(cost_suite(sram)?);

    let mut report = Report::new(&VerifyConfig {
        common,
        args,
        cost_sram_bytes: sram,
    })?;
    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        report.push(c)?;
    }
    Ok(Outcome { report, passed })
}

fn tol<T: Scalar>(f64_tol: f64) -> f64 {
    match T::DTYPE {
        Dtype::F64 => f64_tol,
        Dtype::F32 => 1e-5,
    }
}

struct Instance<T> {
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    fq: Matrix<T>,
    fk: Matrix<T>,
    mask: MaskSpec,
    tiles: TileConfig,
}

fn instance<T: Scalar>(rng: &mut Rng, n: usize) -> Instance<T> {
    let causal = rng.below(2) == 1;
    let m = if causal {
        n
    } else {
        rng.range_inclusive(1, n + 16)
    };
    let c = rng.range_inclusive(4, 64);
    let r = rng.range_inclusive(1, 32);
    let tiles =
        TileConfig::new(rng.range_inclusive(1, 64), rng.range_inclusive(1, 64)).expect("positive");
    Instance {
        q: rng.normal_matrix(n, c).cast(),
        k: rng.normal_matrix(m, c).cast(),
        v: rng.normal_matrix(m, c).cast(),
        fq: rng.normal_matrix(n, r).cast(),
        fk: rng.normal_matrix(m, r).cast(),
        mask: if causal {
            MaskSpec::Causal
        } else {
            MaskSpec::None
        },
        tiles,
    }
}

/// `perturb` adds `eps·j` to column `j` of the oracle's bias, so the
/// equivalence property sees a different bias than the factored path.
pub fn attention_suite<T: Scalar>(
    seed: u64,
    ns: &[usize],
    instances: usize,
    perturb: Option<f64>,
) -> CliResult<Vec<Check>> {
    let mut rng = Rng::new(seed);
    let (mut equiv, mut tiling, mut causal, mut shift, mut stochastic) =
        (0f64, 0f64, 0f64, 0f64, 0f64);
    for i in 0..instances {
        let n = ns[i % ns.len()];
        let x = instance::<T>(&mut rng, n);
        let inputs = AttentionInputs::new(&x.q, &x.k, &x.v)?;
        let dense = x.fq.matmul_transposed(&x.fk)?;

        let oracle_bias = match perturb {
            Some(eps) => Matrix::from_fn(dense.rows(), dense.cols(), |i, j| {
                dense.get(i, j) + T::narrow(eps * j as f64)
            }),
            None => dense.clone(),
        };
        let fast = flashbias_attention(&inputs, &x.fq, &x.fk, x.mask, x.tiles)?;
        let slow = reference_attention(&inputs, &BiasProvider::Dense(&oracle_bias), x.mask)?;
        equiv = equiv.max(diff(&fast, &slow));

        let provider = BiasProvider::Dense(&dense);
        let a = tiled_attention(&inputs, &provider, x.mask, x.tiles)?;
        let b = tiled_attention(&inputs, &provider, x.mask, TileConfig::new(7, 5)?)?;
        tiling = tiling.max(diff(&a, &b));

        if x.mask == MaskSpec::Causal && n > 1 {
            let cut = rng.below(n - 1);
            let mut k2 = x.k.clone();
            let mut v2 = x.v.clone();
            for j in cut + 1..n {
                for t in 0..x.k.cols() {
                    k2.set(j, t, T::narrow(rng.uniform(-50.0, 50.0)));
                    v2.set(j, t, T::narrow(rng.uniform(-50.0, 50.0)));
                }
            }
            let moved = AttentionInputs::new(&x.q, &k2, &v2)?;
            let other = flashbias_attention(&moved, &x.fq, &x.fk, x.mask, x.tiles)?;
            let head = |m: &Matrix<T>| m.slice_rows(0..cut + 1);
            causal = causal.max(diff(&head(&fast), &head(&other)));
        }

        let s = rng.uniform(-20.0, 20.0);
        let fq_ext = x.fq.concat_cols(&Matrix::filled(n, 1, T::narrow(s)))?;
        let fk_ext = x.fk.concat_cols(&Matrix::filled(x.k.rows(), 1, T::one()))?;
        let shifted = flashbias_attention(&inputs, &fq_ext, &fk_ext, x.mask, x.tiles)?;
        shift = shift.max(diff(&shifted, &fast));

        let w = reference_weights(&inputs, &provider, x.mask)?;
        for i in 0..w.rows() {
            stochastic = stochastic.max((w.row(i).iter().sum::<f64>() - 1.0).abs());
        }
    }
    const S: &str = "attention";
    Ok(vec![
        Check::at_most(
            S,
            "factored_equals_reference",
            equiv,
            tol::<T>(1e-10),
            instances,
        ),
        Check::at_most(S, "tiling_invariance", tiling, tol::<T>(1e-11), instances),
        Check::at_most(
            S,
            "causal_prefix_independence",
            causal,
            tol::<T>(1e-13),
            instances,
        ),
        Check::at_most(
            S,
            "constant_shift_invariance",
            shift,
            tol::<T>(1e-12),
            instances,
        ),
        Check::at_most(S, "weights_row_stochastic", stochastic, 1e-12, instances),
    ])
}

fn diff<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> f64 {
    a.cast::<f64>()
        .max_abs_diff(&b.cast::<f64>())
        .expect("same shape")
}

pub fn decomposition_suite(seed: u64) -> CliResult<Vec<Check>> {
    const S: &str = "decomposition";
    let mut rng = Rng::new(seed ^ 0x5eed);
    let mut checks = Vec::new();

    let mut alibi = 0f64;
    let sizes = [8, 64, 512];
    for &n in &sizes {
        let fb = decompose_alibi(n, n, 1.0);
        let dense = generate_bias(&BiasGenerator::Alibi {
            n,
            m: n,
            slope: 1.0,
        })?;
        alibi = alibi.max(fb.reconstruct().max_abs_diff(&dense)?);
    }
    checks.push(Check::at_most(S, "alibi_exact", alibi, 0.0, sizes.len()));

    let mut spatial = 0f64;
    let counts = [32, 128, 256];
    for &n in &counts {
        let pos = rng.uniform_matrix(n, 3, -1e3, 1e3);
        let w: Vec<f64> = (0..n).map(|_| rng.uniform(0.5, 2.0)).collect();
        let fb = decompose_spatial(&pos, &pos, Some(&w))?;
        let dense = generate_bias(&BiasGenerator::SpatialDist3D {
            pos_q: pos.clone(),
            pos_k: pos,
            row_weights: Some(w),
        })?;
        spatial = spatial.max(fb.reconstruct().max_abs_diff(&dense)? / dense.max_abs().max(1.0));
    }
    checks.push(Check::at_most(
        S,
        "spatial_weighted_relative",
        spatial,
        1e-9,
        counts.len(),
    ));

    let low = generate_bias::<f64>(&BiasGenerator::RandomLowRank {
        n: 64,
        m: 64,
        r: 8,
        seed,
    })?;
    let (_, rep) = svd_decompose(&low, RankTarget::Energy(1.0 - 1e-12))?;
    let mut rank8 = Check::at_most(S, "svd_recovers_rank8", rep.rel_fro_err, 1e-9, 1);
    rank8.passed &= rep.rank_used == 8;
    checks.push(rank8);

    let (mut identity, mut monotone) = (0f64, true);
    let trials = 20;
    for t in 0..trials {
        let b = rng.normal_matrix(24, 18);
        let (_, rep) = svd_decompose(&b, RankTarget::Rank(1 + t % 17))?;
        identity = identity.max((rep.rel_fro_err.powi(2) + rep.energy_retained - 1.0).abs());
        let profile = energy_profile(&svd(&b).s);
        monotone &= profile.windows(2).all(|w| w[0] <= w[1]) && profile.last() == Some(&1.0);
    }
    checks.push(Check::at_most(
        S,
        "eckart_young_identity",
        identity,
        1e-10,
        trials,
    ));
    checks.push(Check::at_most(
        S,
        "energy_monotone",
        if monotone { 0.0 } else { 1.0 },
        0.0,
        trials,
    ));

    let x = rng.uniform_matrix(4, 2, -1.0, 1.0);
    let target = rng.normal_matrix(4, 4);
    let nets = MlpPair::<f64>::new(2, 5, 3, seed);
    let worst = gradient_check(&nets, &x, &x, &target, 1e-5);
    checks.push(Check::at_most(
        S,
        "gradient_matches_central_differences",
        worst,
        1e-5,
        1,
    ));
    Ok(checks)
}

pub fn cost_suite(sram_bytes: u64) -> CliResult<Vec<Check>> {
    const S: &str = "cost";
    let sizes = [1024u64, 4096, 16_384];
    let at = |n, m, c, r, algorithm| {
        count(&CostParams {
            n,
            m,
            c,
            r,
            sram_bytes,
            dtype_bytes: 2,
            algorithm,
        })
    };

    let (mut worst_ratio, mut cases) = (0f64, 0);
    let (mut blocks_ok, mut affine_ok, mut bound_ok) = (true, true, true);
    for &n in &sizes {
        for &m in &sizes {
            for c in [32u64, 64, 128] {
                for r in (8..=c).step_by(8) {
                    for alg in Algorithm::ALL {
                        let rep = at(n, m, c, r, alg)?;
                        blocks_ok &=
                            rep.t == n.div_ceil(rep.b_q) && rep.total == rep.reads + rep.writes;
                        let (a1, a2, a3) =
                            (rep, at(n, 2 * m, c, r, alg)?, at(n, 3 * m, c, r, alg)?);
                        affine_ok &= a2.total - a1.total == a3.total - a2.total;
                    }
                    let p = CostParams {
                        n,
                        m,
                        c,
                        r,
                        sram_bytes,
                        dtype_bytes: 2,
                        algorithm: Algorithm::FlashBias,
                    };
                    if let Ok(bound) = corollary1_bound(&p) {
                        bound_ok &= at(n, m, c, r, Algorithm::FlashBias)?.total as f64
                            >= COROLLARY1_KAPPA * bound;
                    }
                    if n * m >= 4 * (n + m) * (c + r) {
                        let fb = at(n, m, c, r, Algorithm::FlashBias)?.total as f64;
                        let dense = at(n, m, c, r, Algorithm::FlashDenseBias)?.total as f64;
                        worst_ratio = worst_ratio.max(fb / dense);
                        cases += 1;
                    }
                }
            }
        }
    }
    let flag = |ok: bool| if ok { 0.0 } else { 1.0 };
    let mut below = Check::at_most(S, "factored_below_dense_bias", worst_ratio, 1.0, cases);
    below.passed = worst_ratio < 1.0;
    Ok(vec![
        below,
        Check::at_most(S, "blocks_cover_queries", flag(blocks_ok), 0.0, cases),
        Check::at_most(S, "affine_in_keys", flag(affine_ok), 0.0, cases),
        Check::at_most(S, "above_lower_bound", flag(bound_ok), 0.0, cases),
    ])
}
