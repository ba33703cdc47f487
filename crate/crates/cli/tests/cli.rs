use std::fs::{self, File};
use std::path::Path;
use std::process::{Command, Output};

use flashbias::cost::{count, Algorithm, CostParams, CostReport};
use flashbias::decomposition::fbf::{read_fbf, AnyFactoredBias};
use flashbias::decomposition::{generate_bias, BiasGenerator};
use flashbias::tensor::io::write_dbm;
use serde_json::Value;

fn flashbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flashbias"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("bad json ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn results(v: &Value) -> &Vec<Value> {
    v["results"].as_array().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_passes_by_default() {
    let out = flashbias(&["verify", "--seed", "3"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let v = json(&out);
    assert_eq!(v["tool_version"], flashbias_cli::TOOL_VERSION);
    assert_eq!(v["config"]["seed"], 3);
    assert!(results(&v).len() >= 10);
    assert!(results(&v).iter().all(|r| r["passed"] == true));
}

#[test]
fn injected_bias_fault_is_reported() {
    let out = flashbias(&["verify", "--perturb-bias", "1e-3"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    let eq = results(&v)
        .iter()
        .find(|r| r["property"] == "factored_equals_reference")
        .unwrap();
    assert_eq!(eq["passed"], false);
    assert!(eq["measured"].as_f64().unwrap() >= 1e-4);
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["verify", "--n", ""][..],
        &["verify", "--dtype", "f16"],
        &["cost", "--c", ","],
        &["cost", "--sram-bytes", "16"],
        &[
            "decompose",
            "--gen",
            "nope:1",
            "--method",
            "svd",
            "--rank",
            "2",
        ],
        &["decompose", "--gen", "spherical:8", "--method", "exact"],
        &["decompose", "--gen", "lowrank:8,8,2", "--method", "neural"],
        &["decompose", "--gen", "lowrank:8,8,2", "--method", "svd"],
        &[
            "decompose",
            "--in",
            "/nonexistent.dbm",
            "--method",
            "svd",
            "--rank",
            "1",
        ],
        &["bench", "--sram-bytes", "1,2"],
        &["bench", "--threads", "0"],
        &["frobnicate"],
    ] {
        let out = flashbias(args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn help_documents_generator_grammar() {
    let out = flashbias(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in [
        "alibi:N,M",
        "spherical:N",
        "lowrank:N,M,R",
        "verify",
        "bench",
        "--sram-bytes",
    ] {
        assert!(text.contains(needle), "{needle}");
    }
    let verify_help = flashbias(&["verify", "--help"]);
    assert!(String::from_utf8_lossy(&verify_help.stdout).contains("--perturb-bias"));
}

#[test]
fn cost_rows_match_direct_counts() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("cost.csv");
    let out = flashbias(&[
        "cost",
        "--n",
        "4096",
        "--c",
        "64",
        "--r",
        "16",
        "--sram-bytes",
        "1048576",
        "--elem-bytes",
        "2",
        "--format",
        "csv",
        "--out",
        path_str(&csv_path),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        format!(
            "{},reads_ratio,total_ratio,scenario",
            CostReport::CSV_HEADER
        )
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    for (row, alg) in rows[..4].iter().zip(Algorithm::ALL) {
        let direct = count(&CostParams {
            n: 4096,
            m: 4096,
            c: 64,
            r: 16,
            sram_bytes: 1 << 20,
            dtype_bytes: 2,
            algorithm: alg,
        })
        .unwrap();
        assert_eq!(row[..13].join(","), direct.csv_row());
        assert_eq!(row[15], "sweep");
    }
    assert!(rows[4..].iter().all(|r| r[15] == "reference_point"));
}

#[test]
fn cost_always_carries_the_reference_point() {
    let out = flashbias(&["cost", "--n", "1024"]);
    let v = json(&out);
    let fb = results(&v)
        .iter()
        .find(|r| r["scenario"] == "reference_point" && r["algorithm"] == "flash_bias")
        .unwrap();
    assert_eq!(fb["n"], 16384);
    assert_eq!(fb["c"], 64);
    assert_eq!(fb["r"], 64);
    assert_eq!(fb["sram"], 102400);
    assert_eq!(fb["dtype"], 2);
    // baseline/this; the band check itself lives in the acceptance suite
    let ratio = fb["total_ratio"].as_f64().unwrap();
    let direct = |algorithm| {
        count(&CostParams {
            n: 16384,
            m: 16384,
            c: 64,
            r: 64,
            sram_bytes: 102400,
            dtype_bytes: 2,
            algorithm,
        })
        .unwrap()
        .total as f64
    };
    assert_eq!(
        ratio,
        direct(Algorithm::FlashDenseBias) / direct(Algorithm::FlashBias)
    );
}

#[test]
fn cost_totals_fall_as_sram_grows() {
    let out = flashbias(&[
        "cost",
        "--n",
        "8192",
        "--sram-bytes",
        "65536,131072,262144,524288",
    ]);
    let v = json(&out);
    for alg in ["flash", "flash_dense_bias", "flash_bias"] {
        let totals: Vec<u64> = results(&v)
            .iter()
            .filter(|r| r["scenario"] == "sweep" && r["algorithm"] == alg)
            .map(|r| r["total"].as_u64().unwrap())
            .collect();
        assert_eq!(totals.len(), 4);
        assert!(totals.windows(2).all(|w| w[1] <= w[0]), "{alg}: {totals:?}");
    }
}

#[test]
fn exact_alibi_decomposition_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let fbf = dir.path().join("alibi.fbf");
    let out = flashbias(&[
        "decompose",
        "--gen",
        "alibi:64,64",
        "--method",
        "exact",
        "--out",
        path_str(&fbf),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let row = &results(&v)[0];
    assert_eq!(row["rank_used"], 2);
    assert_eq!(row["max_abs_err"], 0.0);

    let AnyFactoredBias::F64(fb) = read_fbf(File::open(&fbf).unwrap()).unwrap() else {
        panic!("expected f64 factors");
    };
    let dense = generate_bias(&BiasGenerator::Alibi {
        n: 64,
        m: 64,
        slope: 1.0,
    })
    .unwrap();
    assert_eq!(fb.reconstruct(), dense);
}

#[test]
fn svd_finds_the_rank_of_a_stored_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let dbm = dir.path().join("swinlike.dbm");
    let target = generate_bias::<f64>(&BiasGenerator::RandomLowRank {
        n: 576,
        m: 576,
        r: 24,
        seed: 5,
    })
    .unwrap();
    write_dbm(File::create(&dbm).unwrap(), &target).unwrap();

    let out = flashbias(&[
        "decompose",
        "--in",
        path_str(&dbm),
        "--method",
        "svd",
        "--energy",
        "0.995",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    let row = &results(&v)[0];
    let rank = row["rank_used"].as_u64().unwrap();
    assert!((1..=24).contains(&rank), "rank {rank}");
    assert!(row["energy_retained"].as_f64().unwrap() >= 0.995);
}

#[test]
fn neural_decomposition_writes_trace_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let fbf = dir.path().join(name);
        let out = flashbias(&[
            "decompose",
            "--gen",
            "spherical:16",
            "--method",
            "neural",
            "--rank",
            "8",
            "--hidden",
            "16",
            "--iters",
            "200",
            "--seed",
            "9",
            "--out",
            path_str(&fbf),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        (fs::read(&fbf).unwrap(), json(&out))
    };
    let (bytes_a, report_a) = run("a.fbf");
    let (bytes_b, report_b) = run("b.fbf");
    assert_eq!(bytes_a, bytes_b);

    let row = &results(&report_a)[0];
    assert_eq!(row["final_loss"], results(&report_b)[0]["final_loss"]);
    assert!(row["final_loss"].as_f64().unwrap() < row["initial_loss"].as_f64().unwrap());
    let trace = fs::read_to_string(row["loss_trace_path"].as_str().unwrap()).unwrap();
    assert_eq!(trace.lines().next(), Some("iteration,loss"));
    assert_eq!(trace.lines().count(), 201);
}

#[test]
fn f32_factor_files_keep_their_dtype() {
    let dir = tempfile::tempdir().unwrap();
    let fbf = dir.path().join("s.fbf");
    let out = flashbias(&[
        "decompose",
        "--gen",
        "spatial:12,9",
        "--method",
        "exact",
        "--dtype",
        "f32",
        "--out",
        path_str(&fbf),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(matches!(
        read_fbf(File::open(&fbf).unwrap()).unwrap(),
        AnyFactoredBias::F32(_)
    ));
    assert_eq!(results(&json(&out))[0]["rank_used"], 9);
}

#[test]
fn bench_paths_agree_at_small_n() {
    let out = flashbias(&["bench", "--n", "64", "--c", "16", "--r", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let rows = results(&v);
    assert_eq!(rows.len(), 3);
    let sums: Vec<f64> = rows
        .iter()
        .map(|r| r["checksum"].as_f64().unwrap())
        .collect();
    assert!(sums.iter().all(|s| (s - sums[0]).abs() <= 1e-10));
    assert!(rows.iter().all(|r| r["wall_nanos"].as_u64().unwrap() > 0));
    assert_eq!(v["config"]["runs"], 11);
    assert_eq!(v["config"]["warmup"], 2);
}

#[test]
fn bench_bias_memory_ratio() {
    let out = flashbias(&[
        "bench", "--n", "1024", "--c", "64", "--r", "16", "--dtype", "f32", "--runs", "3",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let v = json(&out);
    let bytes = |path: &str| {
        results(&v).iter().find(|r| r["path"] == path).unwrap()["peak_bias_bytes"]
            .as_u64()
            .unwrap()
    };
    assert_eq!(bytes("flashbias"), (1024 + 1024) * 16 * 4);
    assert_eq!(bytes("tiled_dense"), 1024 * 1024 * 4);
    assert_eq!(bytes("tiled_dense") / bytes("flashbias"), 32);
}

#[test]
fn bench_skips_dense_paths_over_the_cap() {
    let out = flashbias(&[
        "bench",
        "--n",
        "64",
        "--c",
        "8",
        "--r",
        "2",
        "--mem-cap-bytes",
        "8192",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let status: Vec<&str> = results(&v)
        .iter()
        .map(|r| r["status"].as_str().unwrap())
        .collect();
    assert_eq!(status, ["oom_skipped", "oom_skipped", "ok"]);
}

#[test]
fn bench_thread_count_does_not_change_outputs() {
    let sums = |threads: &str| -> Vec<f64> {
        let out = flashbias(&[
            "bench",
            "--n",
            "200",
            "--c",
            "8",
            "--r",
            "4",
            "--runs",
            "1",
            "--warmup",
            "0",
            "--threads",
            threads,
        ]);
        assert_eq!(out.status.code(), Some(0));
        results(&json(&out))
            .iter()
            .map(|r| r["checksum"].as_f64().unwrap())
            .collect()
    };
    assert_eq!(sums("1"), sums("3"));
}
