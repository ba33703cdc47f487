use flashbias::attention::{
    flashbias_attention, reference_attention, reference_weights, tiled_attention, AttentionInputs,
    BiasProvider, MaskSpec, TileConfig,
};
use flashbias::decomposition::fbf::{read_fbf, write_fbf, AnyFactoredBias};
use flashbias::decomposition::{
    decompose_spatial, energy_profile, generate_bias, svd_decompose, BiasGenerator, FactoredBias,
    Origin, RankTarget,
};
use flashbias::tensor::io::{read_dbm, write_dbm, AnyMatrix};
use flashbias::tensor::rng::Rng;
use flashbias::tensor::svd;
use flashbias::Matrix64;
use proptest::prelude::*;

fn mask_of(causal: bool) -> MaskSpec {
    if causal {
        MaskSpec::Causal
    } else {
        MaskSpec::None
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matmul_is_associative(seed in any::<u64>(), a in 1usize..20, b in 1usize..20, c in 1usize..20, d in 1usize..20) {
        let mut rng = Rng::new(seed);
        let x = rng.normal_matrix(a, b);
        let y = rng.normal_matrix(b, c);
        let z = rng.normal_matrix(c, d);
        let left = x.matmul(&y).unwrap().matmul(&z).unwrap();
        let right = x.matmul(&y.matmul(&z).unwrap()).unwrap();
        let rel = left.sub(&right).unwrap().frobenius() / left.frobenius().max(1e-300);
        prop_assert!(rel <= 1e-10);
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..64) {
        let s = Rng::new(seed).uniform_matrix(rows, cols, -1e3, 1e3).softmax_rows();
        for i in 0..rows {
            prop_assert!(s.row(i).iter().all(|&p| p >= 0.0));
            prop_assert!((s.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn flashbias_equals_reference(
        seed in any::<u64>(),
        n in 1usize..=96,
        m in 1usize..=96,
        c in 1usize..=32,
        r in 1usize..=16,
        b_q in 1usize..=64,
        b_kv in 1usize..=64,
        causal in any::<bool>(),
    ) {
        let m = if causal { n } else { m };
        let mut rng = Rng::new(seed);
        let (q, k, v) = (rng.normal_matrix(n, c), rng.normal_matrix(m, c), rng.normal_matrix(m, c));
        let (fq, fk) = (rng.normal_matrix(n, r), rng.normal_matrix(m, r));
        let inputs = AttentionInputs::new(&q, &k, &v).unwrap();
        let dense = fq.matmul_transposed(&fk).unwrap();
        let tiles = TileConfig::new(b_q, b_kv).unwrap();
        let fast = flashbias_attention(&inputs, &fq, &fk, mask_of(causal), tiles).unwrap();
        let slow = reference_attention(&inputs, &BiasProvider::Dense(&dense), mask_of(causal)).unwrap();
        prop_assert!(fast.max_abs_diff(&slow).unwrap() <= 1e-10);
    }

    #[test]
    fn tiling_does_not_change_the_result(
        seed in any::<u64>(),
        n in 1usize..=80,
        c in 1usize..=16,
        tiles_a in (1usize..=48, 1usize..=48),
        tiles_b in (1usize..=48, 1usize..=48),
        causal in any::<bool>(),
    ) {
        let mut rng = Rng::new(seed);
        let (q, k, v) = (rng.normal_matrix(n, c), rng.normal_matrix(n, c), rng.normal_matrix(n, c));
        let b = rng.normal_matrix(n, n);
        let inputs = AttentionInputs::new(&q, &k, &v).unwrap();
        let bias = BiasProvider::Dense(&b);
        let a = tiled_attention(&inputs, &bias, mask_of(causal), TileConfig::new(tiles_a.0, tiles_a.1).unwrap()).unwrap();
        let z = tiled_attention(&inputs, &bias, mask_of(causal), TileConfig::new(tiles_b.0, tiles_b.1).unwrap()).unwrap();
        prop_assert!(a.max_abs_diff(&z).unwrap() <= 1e-11);
    }

    #[test]
    fn causal_rows_ignore_future_rows(seed in any::<u64>(), n in 2usize..=64, cut_frac in 0.0f64..1.0, b_q in 1usize..=32, b_kv in 1usize..=32) {
        let c = 6;
        let cut = ((n - 1) as f64 * cut_frac) as usize;
        let mut rng = Rng::new(seed);
        let (q, k, v) = (rng.normal_matrix(n, c), rng.normal_matrix(n, c), rng.normal_matrix(n, c));
        let (fq, fk) = (rng.normal_matrix(n, 3), rng.normal_matrix(n, 3));
        let mut k2 = k.clone();
        let mut v2 = v.clone();
        for j in cut + 1..n {
            for t in 0..c {
                k2.set(j, t, rng.uniform(-50.0, 50.0));
                v2.set(j, t, rng.uniform(-50.0, 50.0));
            }
        }
        let tiles = TileConfig::new(b_q, b_kv).unwrap();
        let a = flashbias_attention(&AttentionInputs::new(&q, &k, &v).unwrap(), &fq, &fk, MaskSpec::Causal, tiles).unwrap();
        let b = flashbias_attention(&AttentionInputs::new(&q, &k2, &v2).unwrap(), &fq, &fk, MaskSpec::Causal, tiles).unwrap();
        for i in 0..=cut {
            for t in 0..c {
                prop_assert!((a.get(i, t) - b.get(i, t)).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn constant_bias_shift_is_invisible(seed in any::<u64>(), n in 1usize..=40, shift in -20.0f64..20.0) {
        let c = 4;
        let mut rng = Rng::new(seed);
        let (q, k, v) = (rng.normal_matrix(n, c), rng.normal_matrix(n, c), rng.normal_matrix(n, c));
        let (fq, fk) = (rng.normal_matrix(n, 2), rng.normal_matrix(n, 2));
        let inputs = AttentionInputs::new(&q, &k, &v).unwrap();

        let b = fq.matmul_transposed(&fk).unwrap();
        let shifted = b.map(|x| x + shift);
        let base = reference_attention(&inputs, &BiasProvider::Dense(&b), MaskSpec::None).unwrap();
        let moved = reference_attention(&inputs, &BiasProvider::Dense(&shifted), MaskSpec::None).unwrap();
        prop_assert!(base.max_abs_diff(&moved).unwrap() <= 1e-12);

        // the same shift as one extra rank: fq gains a column of `shift`, fk a column of ones
        let fq_ext = fq.concat_cols(&Matrix64::filled(n, 1, shift)).unwrap();
        let fk_ext = fk.concat_cols(&Matrix64::filled(n, 1, 1.0)).unwrap();
        let tiles = TileConfig::new(8, 8).unwrap();
        let fast = flashbias_attention(&inputs, &fq_ext, &fk_ext, MaskSpec::None, tiles).unwrap();
        prop_assert!(fast.max_abs_diff(&base).unwrap() <= 1e-12);
    }

    #[test]
    fn reference_weights_are_stochastic(seed in any::<u64>(), n in 1usize..=30, causal in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let (q, k, v) = (rng.normal_matrix(n, 3), rng.normal_matrix(n, 3), rng.normal_matrix(n, 3));
        let b = rng.uniform_matrix(n, n, -100.0, 100.0);
        let w = reference_weights(&AttentionInputs::new(&q, &k, &v).unwrap(), &BiasProvider::Dense(&b), mask_of(causal)).unwrap();
        for i in 0..n {
            prop_assert!(w.row(i).iter().all(|&x| x >= 0.0));
            prop_assert!((w.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn spatial_factors_reconstruct(seed in any::<u64>(), n in 1usize..=40, m in 1usize..=40, weighted in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let pq = rng.uniform_matrix(n, 3, -1e3, 1e3);
        let pk = rng.uniform_matrix(m, 3, -1e3, 1e3);
        let w: Option<Vec<f64>> = weighted.then(|| (0..n).map(|_| rng.uniform(0.5, 2.0)).collect());
        let fb = decompose_spatial(&pq, &pk, w.as_deref()).unwrap();
        let dense = generate_bias(&BiasGenerator::SpatialDist3D { pos_q: pq, pos_k: pk, row_weights: w }).unwrap();
        let rel = fb.reconstruct().max_abs_diff(&dense).unwrap() / dense.max_abs().max(1.0);
        prop_assert!(rel <= 1e-9);
    }

    #[test]
    fn energy_is_monotone(seed in any::<u64>(), n in 1usize..=24, m in 1usize..=24) {
        let s = svd(&Rng::new(seed).normal_matrix(n, m)).s;
        let profile = energy_profile(&s);
        prop_assert!(profile.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*profile.last().unwrap(), 1.0);
    }

    #[test]
    fn dense_files_round_trip(seed in any::<u64>(), rows in 0usize..12, cols in 0usize..12, f32_file in any::<bool>()) {
        let m = Rng::new(seed).normal_matrix(rows, cols);
        let mut buf = Vec::new();
        if f32_file {
            let m32 = m.cast::<f32>();
            write_dbm(&mut buf, &m32).unwrap();
            prop_assert_eq!(read_dbm(&buf[..]).unwrap(), AnyMatrix::F32(m32));
        } else {
            write_dbm(&mut buf, &m).unwrap();
            prop_assert_eq!(read_dbm(&buf[..]).unwrap(), AnyMatrix::F64(m));
        }
    }

    #[test]
    fn factored_files_round_trip(seed in any::<u64>(), n in 1usize..10, m in 1usize..10, r in 1usize..5) {
        let mut rng = Rng::new(seed);
        let fb = FactoredBias::new(rng.normal_matrix(n, r), rng.normal_matrix(m, r), Origin::Neural, "x").unwrap();
        let mut buf = Vec::new();
        write_fbf(&mut buf, &fb).unwrap();
        match read_fbf(&buf[..]).unwrap() {
            AnyFactoredBias::F64(back) => {
                prop_assert_eq!(back.fq(), fb.fq());
                prop_assert_eq!(back.fk(), fb.fk());
                prop_assert_eq!(back.origin, Origin::Neural);
            }
            AnyFactoredBias::F32(_) => prop_assert!(false, "dtype changed"),
        }
    }
}

#[test]
fn svd_truncation_beats_random_factors() {
    let mut rng = Rng::new(99);
    for trial in 0..5 {
        let b = rng.normal_matrix(24, 18);
        let k = 1 + trial * 3;
        let (_, report) = svd_decompose(&b, RankTarget::Rank(k)).unwrap();
        for _ in 0..20 {
            let x = rng.normal_matrix(24, k);
            let y = rng.normal_matrix(18, k);
            let guess = x.matmul_transposed(&y).unwrap();
            // best scaling of the random guess, so the comparison is not trivially won
            let dot: f64 = guess
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .map(|(g, t)| g * t)
                .sum();
            let scaled = guess.scale(dot / guess.frobenius().powi(2));
            let rel = scaled.sub(&b).unwrap().frobenius() / b.frobenius();
            assert!(report.rel_fro_err <= rel);
        }
    }
}
