use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use seqglasso::cli::io::{matrix_from_csv, write_data_csv};
use seqglasso::cli::run_with_args;
use seqglasso::graph::EdgeSet;
use seqglasso::npn::DataMatrix;
use seqglasso::sequential::correlation_step;
use seqglasso::simgen::{model_for, sample_gaussian, GraphFamily, SimRng};
use seqglasso::spd::inverse_spd;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_seqglasso");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["seqglasso"];
    full.extend_from_slice(args);
    run_with_args(full)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn write_gaussian(path: &Path, family: GraphFamily, d: usize, n: usize, seed: u64) {
    let m = model_for(family, d, seed, false).unwrap();
    let x = sample_gaussian(&m.sigma_true, n, &mut SimRng::for_replicate(seed, 0)).unwrap();
    write_data_csv(path, &x).unwrap();
}

/// The band fixture is replicate 0 of `band, d = 10, seed = 7`. Set
/// `SEQGLASSO_BLESS=1` to rewrite it.
#[test]
fn band_fixture_matches_generator() {
    let tmp = TempDir::new().unwrap();
    let fresh = tmp.path().join("band.csv");
    write_gaussian(&fresh, GraphFamily::Band, 10, 500, 7);
    let path = fixture("band_d10_n500_seed7.csv");
    if std::env::var_os("SEQGLASSO_BLESS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::copy(&fresh, &path).unwrap();
    }
    assert_eq!(fs::read(&fresh).unwrap(), fs::read(&path).unwrap());
}

#[test]
fn estimate_recovers_band_fixture() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path();
    let input = fixture("band_d10_n500_seed7.csv");
    assert_eq!(
        run(&["estimate", s(&input), "--lambda", "0.2", "--out", s(out)]),
        0
    );

    let edges: Vec<(usize, usize, f64)> =
        serde_json::from_str(&fs::read_to_string(out.join("edges.json")).unwrap()).unwrap();
    let found = EdgeSet::new(edges.iter().map(|&(i, j, _)| (i, j))).unwrap();
    assert_eq!(found, EdgeSet::new((0..9).map(|i| (i, i + 1))).unwrap());

    let theta = matrix_from_csv(&fs::read_to_string(out.join("theta.csv")).unwrap()).unwrap();
    for &(i, j, v) in &edges {
        assert_eq!(theta.get(i, j), v);
    }
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["per_stage_kkt"].as_array().unwrap().len(), 4);
    assert_eq!(meta["n"], 500);
    assert!(out.join("psi.csv").exists());
}

#[test]
fn estimate_screens_uncorrelated_pair() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("pair.csv");
    let mut rng = SimRng::for_replicate(3, 0);
    let rows: Vec<[f64; 2]> = (0..300)
        .map(|_| [rng.standard_normal(), rng.standard_normal()])
        .collect();
    write_data_csv(&input, &DataMatrix::from_rows(&rows).unwrap()).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(
        run(&["estimate", s(&input), "--lambda", "0.5", "--out", s(&out)]),
        0
    );
    assert_eq!(
        fs::read_to_string(out.join("edges.json")).unwrap().trim(),
        "[]"
    );
}

#[test]
fn lasso_stages_are_a_fixed_point() {
    let tmp = TempDir::new().unwrap();
    let input = fixture("band_d10_n500_seed7.csv");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, iters) in [(&a, "1"), (&b, "4")] {
        let code = run(&[
            "estimate",
            s(&input),
            "--lambda",
            "0.2",
            "--penalty",
            "lasso",
            "--iters",
            iters,
            "--out",
            s(dir),
        ]);
        assert_eq!(code, 0);
    }
    assert_eq!(
        fs::read(a.join("theta.csv")).unwrap(),
        fs::read(b.join("theta.csv")).unwrap()
    );
}

#[test]
fn estimate_with_header_and_npn() {
    let tmp = TempDir::new().unwrap();
    let body = fs::read_to_string(fixture("band_d10_n500_seed7.csv")).unwrap();
    let input = tmp.path().join("h.csv");
    let header: Vec<String> = (0..10).map(|j| format!("x{j}")).collect();
    fs::write(&input, format!("{}\n{body}", header.join(","))).unwrap();
    let out = tmp.path().join("out");
    let code = run(&[
        "estimate",
        s(&input),
        "--header",
        "--npn",
        "--lambda",
        "0.2",
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let theta = matrix_from_csv(&fs::read_to_string(out.join("theta.csv")).unwrap()).unwrap();
    assert_eq!(theta.dim(), 10);
    // Without --header the names fail to parse.
    assert_eq!(
        run(&["estimate", s(&input), "--lambda", "0.2", "--out", s(&out)]),
        2
    );
}

#[test]
fn malformed_csv_exit_code_and_message() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("bad.csv");
    fs::write(&input, "1,2,3\n4,five,6\n7,8,9\n").unwrap();
    let o = Command::new(BIN)
        .args([
            "estimate",
            s(&input),
            "--lambda",
            "0.1",
            "--out",
            s(tmp.path()),
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("row 2, column 2"), "{msg}");

    fs::write(&input, "1,2,3\n4,5\n7,8,9\n").unwrap();
    let o = Command::new(BIN)
        .args([
            "estimate",
            s(&input),
            "--lambda",
            "0.1",
            "--out",
            s(tmp.path()),
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
}

#[test]
fn config_errors_exit_four() {
    let input = fixture("band_d10_n500_seed7.csv");
    assert_eq!(run(&["estimate", s(&input)]), 4);
    assert_eq!(run(&["estimate", s(&input), "--lambda=-1"]), 4);
    assert_eq!(
        run(&["estimate", s(&input), "--lambda", "0.1", "--gamma", "1.5"]),
        4
    );
    assert_eq!(run(&["simulate", "--reps", "0"]), 4);
    assert_eq!(run(&["simulate", "--lambdas", "0.1,-0.2"]), 4);
    assert_eq!(run(&["simulate", "--penalty", "lasso"]), 4);
    assert_eq!(run(&["pattern", "--k-max", "150", "--d", "150"]), 4);

    let o = Command::new(BIN)
        .args(["pattern", "--k-max", "5", "--d", "10"])
        .env("SEQGLASSO_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let o = Command::new(BIN)
        .args(["simulate", "--d", "5", "--reps", "1", "--lambdas", "0.1"])
        .env("SEQGLASSO_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
}

fn simulate_small(out: &Path, jobs: &str) -> i32 {
    run(&[
        "simulate",
        "--family",
        "band",
        "--d",
        "12",
        "--n",
        "150",
        "--reps",
        "4",
        "--lambda-count",
        "5",
        "--lambda-min",
        "0.05",
        "--lambda-max",
        "0.5",
        "--seed",
        "3",
        "--jobs",
        jobs,
        "--out",
        s(out),
    ])
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(simulate_small(&a, "1"), 0);
    assert_eq!(simulate_small(&b, "3"), 0);
    for f in ["metrics.csv", "summary.csv", "model.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn summary_round_trips_from_metrics() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(simulate_small(tmp.path(), "0"), 0);
    let metrics = read_csv(&tmp.path().join("metrics.csv"));
    let summary = read_csv(&tmp.path().join("summary.csv"));
    assert_eq!(metrics.len(), 4 * 5 * 3);
    assert_eq!(summary.len(), 5 * 3);

    for m in metrics.iter().filter(|r| r[2] == "oracle") {
        assert_eq!(m[3].parse::<f64>().unwrap(), 1.0);
        assert_eq!(m[4].parse::<f64>().unwrap(), 0.0);
    }
    for row in &summary {
        let cell: Vec<&Vec<String>> = metrics
            .iter()
            .filter(|m| m[1] == row[0] && m[2] == row[1] && m[10] == "ok")
            .collect();
        assert_eq!(cell.len(), row[2].parse::<usize>().unwrap());
        // Summary columns 3..8 are the means of metrics columns 3..8.
        for col in 3..8 {
            let mean = cell
                .iter()
                .map(|m| m[col].parse::<f64>().unwrap())
                .sum::<f64>()
                / cell.len() as f64;
            let stored: f64 = row[col].parse().unwrap();
            assert!(
                (mean - stored).abs() <= 1e-12,
                "column {col}: {mean} vs {stored}"
            );
        }
    }
}

#[test]
fn failed_replicates_respect_threshold() {
    let tmp = TempDir::new().unwrap();
    // An unreachable tolerance makes every solve fail.
    let args = |min: &str| {
        vec![
            "simulate".to_string(),
            "--d".into(),
            "6".into(),
            "--reps".into(),
            "2".into(),
            "--lambdas".into(),
            "0.1".into(),
            "--tol".into(),
            "1e-300".into(),
            "--min-success".into(),
            min.into(),
            "--out".into(),
            s(tmp.path()).into(),
        ]
    };
    let mut full = vec!["seqglasso".to_string()];
    full.extend(args("0.9"));
    assert_eq!(run_with_args(full.clone()), 3);
    let metrics = read_csv(&tmp.path().join("metrics.csv"));
    assert!(metrics.iter().all(|m| m[10] == "failed"));
    let summary = read_csv(&tmp.path().join("summary.csv"));
    assert!(summary.iter().all(|r| r[2] == "0"));

    let mut full = vec!["seqglasso".to_string()];
    full.extend(args("0"));
    assert_eq!(run_with_args(full), 0);
}

#[test]
fn unpenalized_trace_is_single_mle_stage() {
    let tmp = TempDir::new().unwrap();
    let code = run(&[
        "trace",
        "--d",
        "10",
        "--n",
        "500",
        "--reps",
        "3",
        "--seed",
        "7",
        "--lambda",
        "0",
        "--tol",
        "1e-10",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(code, 0);
    let rows = read_csv(&tmp.path().join("trace.csv"));
    assert_eq!(rows.len(), 3);
    let m = model_for(GraphFamily::Band, 10, 7, false).unwrap();
    for (rep, row) in rows.iter().enumerate() {
        assert_eq!(row[1], "1");
        let x = sample_gaussian(
            &m.sigma_true,
            500,
            &mut SimRng::for_replicate(7, rep as u64),
        )
        .unwrap();
        let (c, _) = correlation_step(&x.second_moment()).unwrap();
        let expect = inverse_spd(&c)
            .unwrap()
            .sub(&m.psi_true())
            .unwrap()
            .frobenius_norm();
        let got: f64 = row[2].parse().unwrap();
        assert!((got - expect).abs() <= 1e-8, "{got} vs {expect}");
    }
}

#[test]
fn scad_trace_contracts_on_small_band() {
    let tmp = TempDir::new().unwrap();
    let code = run(&[
        "trace",
        "--d",
        "10",
        "--n",
        "500",
        "--reps",
        "20",
        "--seed",
        "7",
        "--lambda",
        "0.2",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(code, 0);
    let rows = read_csv(&tmp.path().join("trace.csv"));
    assert_eq!(rows.len(), 20 * 4);
    let err = |r: &Vec<String>| r[2].parse::<f64>().unwrap();
    let ok = rows.chunks(4).filter(|c| err(&c[0]) >= err(&c[3])).count();
    assert!(ok >= 18, "{ok}/20");
}

#[test]
fn lasso_trace_is_flat() {
    let tmp = TempDir::new().unwrap();
    let code = run(&[
        "trace",
        "--d",
        "10",
        "--n",
        "300",
        "--reps",
        "3",
        "--penalty",
        "lasso",
        "--lambda",
        "0.2",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(code, 0);
    let rows = read_csv(&tmp.path().join("trace.csv"));
    for c in rows.chunks(4) {
        let first: f64 = c[0][2].parse().unwrap();
        assert!(c
            .iter()
            .all(|r| (r[2].parse::<f64>().unwrap() - first).abs() <= 1e-8));
    }
}

#[test]
fn pattern_table() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run(&["pattern", "--out", s(tmp.path())]), 0);
    let rows = read_csv(&tmp.path().join("pattern.csv"));
    assert_eq!(rows.len(), 47);
    let ratio = |r: &Vec<String>| r[3].parse::<f64>().unwrap();
    assert_eq!(rows[0][0], "4");
    assert_eq!(rows[0][1], "8");
    for r in &rows {
        let k: f64 = r[0].parse().unwrap();
        let top = 1.0 + 2.0 * (std::f64::consts::PI / (k + 2.0)).cos();
        assert!((ratio(r) - top * top / (2.0 * k)).abs() <= 1e-6);
    }
    assert!((ratio(&rows[0]) - 0.9330).abs() < 1e-4);
    assert!((ratio(&rows[46]) - 0.0898).abs() < 1e-4);
    assert!(rows.windows(2).all(|w| ratio(&w[1]) < ratio(&w[0])));
}
