//! End-to-end tests of the `privgeo` binary: real process spawns, real
//! files, JSON reports parsed from stdout.

use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_privgeo"));
    // Seeds come only from the arguments each test chooses.
    cmd.env_remove("PRIVGEO_SEED");
    cmd
}

fn report(output: &Output) -> Value {
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is a JSON report")
}

/// Report with the only run-dependent field removed.
fn stable(mut value: Value) -> Value {
    value.as_object_mut().expect("report object").remove("wall_ms");
    value
}

fn write_blobs(path: &Path) {
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let mut text = String::new();
    for (cx, cy) in [(0.4, 0.3), (-0.35, -0.2)] {
        for _ in 0..30 {
            let x = cx + rng.random_range(-0.04..0.04);
            let y = cy + rng.random_range(-0.04..0.04);
            text.push_str(&format!("{x},{y}\n"));
        }
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn kcluster_reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("blobs.csv");
    write_blobs(&input);
    let run = || {
        let out = bin()
            .args(["kcluster", "--input"])
            .arg(&input)
            .args(["--k", "2", "--eps", "1000", "--seed", "7", "--const-zeta-override", "1.0"])
            .output()
            .unwrap();
        report(&out)
    };
    let first = run();
    let second = run();
    assert_eq!(stable(first.clone()), stable(second));
    assert_eq!(first["schema"], 1);
    assert_eq!(first["command"], "kcluster");
    assert_eq!(first["seed"], 7);
    let declared = first["budget"]["declared"]["epsilon"].as_f64().unwrap();
    let consumed = first["budget"]["consumed"]["epsilon"].as_f64().unwrap();
    assert!(consumed <= declared + 1e-9, "consumed {consumed} over declared {declared}");
    assert_eq!(first["outputs"]["centers"].as_array().unwrap().len(), 2);
}

#[test]
fn densest_ball_finds_a_planted_blob() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("blobs.csv");
    write_blobs(&input);
    let out = bin()
        .args(["densest-ball", "--input"])
        .arg(&input)
        .args(["--r", "0.1", "--alpha", "0.5", "--eps", "80", "--seed", "3"])
        .output()
        .unwrap();
    let rep = report(&out);
    let count = rep["outputs"]["count"].as_u64().unwrap();
    assert!(count >= 25, "planted blob of 30 points, found {count}");
    assert!((rep["outputs"]["effective_radius"].as_f64().unwrap() - 0.15).abs() < 1e-12);
}

#[test]
fn one_cluster_reports_bottom_when_the_range_cannot_reach_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("blobs.csv");
    write_blobs(&input);
    let out = bin()
        .args(["one-cluster", "--input"])
        .arg(&input)
        .args([
            "--target", "55", "--kappa", "0.01", "--r-high", "0.05", "--w", "1.6", "--eps",
            "50", "--seed", "1",
        ])
        .output()
        .unwrap();
    let rep = report(&out);
    assert_eq!(rep["outputs"]["found"], false);
    assert_eq!(rep["outputs"]["center"], Value::Null);
    assert_eq!(rep["outputs"]["radius"], Value::Null);
}

#[test]
fn closest_pair_stream_matches_a_brute_force_replay() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("ops.txt");

    // Hand-worked boundary case first.
    std::fs::write(&stream, "I 0 0\nQ\nI 3 4\nQ\nD 3 4\nQ\n").unwrap();
    let out = bin()
        .args(["closest-pair", "--d", "2", "--l-bits", "8", "--xi", "25", "--stream"])
        .arg(&stream)
        .output()
        .unwrap();
    let rep = report(&out);
    assert_eq!(rep["outputs"]["responses"], serde_json::json!([0, 1, 0]));

    // Random stream checked against an O(n²) oracle built alongside it.
    let xi: u128 = 20;
    let mut rng = ChaCha20Rng::seed_from_u64(88);
    let mut live: Vec<[u64; 2]> = Vec::new();
    let mut text = String::new();
    let mut expected = Vec::new();
    for _ in 0..150 {
        if !live.is_empty() && (live.len() > 8 || rng.random_range(0..100) < 40) {
            let victim = live.swap_remove(rng.random_range(0..live.len()));
            text.push_str(&format!("D {} {}\n", victim[0], victim[1]));
        } else {
            let p = [rng.random_range(0..=20u64), rng.random_range(0..=20u64)];
            live.push(p);
            text.push_str(&format!("I {} {}\n", p[0], p[1]));
        }
        text.push_str("Q\n");
        let close = live.iter().enumerate().any(|(i, a)| {
            live[..i].iter().any(|b| {
                let dx = (a[0].abs_diff(b[0])) as u128;
                let dy = (a[1].abs_diff(b[1])) as u128;
                dx * dx + dy * dy <= xi
            })
        });
        expected.push(close as u64);
    }
    std::fs::write(&stream, &text).unwrap();
    let out = bin()
        .args(["closest-pair", "--d", "2", "--l-bits", "6", "--xi", "20", "--stream"])
        .arg(&stream)
        .output()
        .unwrap();
    let rep = report(&out);
    let responses: Vec<u64> = rep["outputs"]["responses"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(responses, expected);

    // Raw mode prints the same answers, one per line.
    let out = bin()
        .args(["closest-pair", "--d", "2", "--l-bits", "6", "--xi", "20", "--raw", "--stream"])
        .arg(&stream)
        .output()
        .unwrap();
    assert!(out.status.success());
    let lines: Vec<u64> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(lines, expected);
}

#[test]
fn closest_pair_state_bytes_ignore_operation_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    let points: Vec<[u64; 3]> = (0..30)
        .map(|_| [0; 3].map(|_| rng.random_range(0..=50u64)))
        .collect();

    let mut forward = String::new();
    for p in &points {
        forward.push_str(&format!("I {} {} {}\n", p[0], p[1], p[2]));
    }
    // Reversed order, with decoy points inserted and deleted along the way.
    let mut tangled = String::new();
    for (i, p) in points.iter().rev().enumerate() {
        if i % 3 == 0 {
            let decoy = [200 + i as u64, 200, 200];
            tangled.push_str(&format!("I {} {} {}\n", decoy[0], decoy[1], decoy[2]));
            tangled.push_str(&format!("D {} {} {}\n", decoy[0], decoy[1], decoy[2]));
        }
        tangled.push_str(&format!("I {} {} {}\n", p[0], p[1], p[2]));
    }

    let mut states = Vec::new();
    for (name, ops) in [("forward", &forward), ("tangled", &tangled)] {
        let stream = dir.path().join(format!("{name}.txt"));
        let state = dir.path().join(format!("{name}.state"));
        std::fs::write(&stream, ops).unwrap();
        let out = bin()
            .args(["closest-pair", "--d", "3", "--l-bits", "9", "--xi", "30", "--stream"])
            .arg(&stream)
            .arg("--state-out")
            .arg(&state)
            .output()
            .unwrap();
        report(&out);
        states.push(std::fs::read(&state).unwrap());
    }
    assert_eq!(states[0], states[1], "serialized state must depend only on the set");
}

#[test]
fn exit_codes_separate_contract_from_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("big.csv");
    std::fs::write(&input, "3.0,0.0\n").unwrap();

    // Norm violation without --normalize: contract, exit 2.
    let out = bin()
        .args(["densest-ball", "--input"])
        .arg(&input)
        .args(["--r", "0.1", "--alpha", "0.5", "--eps", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("norm"));

    // Same file accepted under --normalize.
    let out = bin()
        .args(["densest-ball", "--input"])
        .arg(&input)
        .args(["--r", "0.1", "--alpha", "0.5", "--eps", "1", "--normalize"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // Unsupported dimension: capacity, exit 3.
    let stream = dir.path().join("ops.txt");
    std::fs::write(&stream, "Q\n").unwrap();
    let out = bin()
        .args(["closest-pair", "--d", "9", "--l-bits", "8", "--xi", "4", "--stream"])
        .arg(&stream)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // Non-positive budget: contract, exit 2.
    let blobs = dir.path().join("blobs.csv");
    write_blobs(&blobs);
    let out = bin()
        .args(["kcluster", "--input"])
        .arg(&blobs)
        .args(["--k", "2", "--eps", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Unknown flag: usage error, exit 2 (from the argument parser).
    let out = bin().args(["kcluster", "--nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("blobs.csv");
    write_blobs(&input);
    let base = |cmd: &mut Command| {
        cmd.args(["densest-ball", "--input"])
            .arg(&input)
            .args(["--r", "0.1", "--alpha", "0.5", "--eps", "80"]);
    };
    let explicit = {
        let mut cmd = bin();
        base(&mut cmd);
        cmd.args(["--seed", "7"]);
        report(&cmd.output().unwrap())
    };
    let via_env = {
        let mut cmd = bin();
        base(&mut cmd);
        cmd.env("PRIVGEO_SEED", "7");
        report(&cmd.output().unwrap())
    };
    assert_eq!(stable(explicit), stable(via_env));

    let mut cmd = bin();
    base(&mut cmd);
    cmd.env("PRIVGEO_SEED", "not-a-number");
    let out = cmd.output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_emits_the_size_grid() {
    let out = bin()
        .args([
            "bench", "--n", "50,100", "--dims", "2", "--k", "2", "--eps", "100", "--seed",
            "4", "--const-zeta-override", "1.0",
        ])
        .output()
        .unwrap();
    let rep = report(&out);
    let rows = rep["outputs"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        for key in ["n", "d", "k", "wall_ms", "cost"] {
            assert!(row.get(key).is_some(), "bench row missing {key}: {row}");
        }
        assert!(row["cost"].as_f64().unwrap().is_finite());
        assert!(row["wall_ms"].as_f64().unwrap() >= 0.0);
    }
    assert_eq!(rows[0]["n"], 50);
    assert_eq!(rows[1]["n"], 100);
}

#[test]
fn lattice_inspect_reports_closed_form_parameters() {
    let out = bin().args(["lattice-inspect", "--d", "2"]).output().unwrap();
    let rep = report(&out);
    let tau = rep["outputs"]["tau"].as_f64().unwrap();
    assert!((tau - 2.0 / 3.0f64.sqrt()).abs() < 1e-12, "hex tau {tau}");
    assert_eq!(rep["outputs"]["relevant_vector_count"], 6);

    let out = bin().args(["lattice-inspect", "--d", "3"]).output().unwrap();
    let rep = report(&out);
    let tau = rep["outputs"]["tau"].as_f64().unwrap();
    assert!((tau - 3.0f64.sqrt()).abs() < 1e-12, "grid tau {tau}");
    assert_eq!(rep["outputs"]["family"], "ScaledInteger");
}

#[test]
fn halfspace_learns_from_labeled_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("margin.csv");
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let mut text = String::new();
    for _ in 0..200 {
        let s: f64 = if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };
        let x0 = s * rng.random_range(0.88..0.98);
        let x1 = rng.random_range(-0.15..0.15);
        text.push_str(&format!("{x0},{x1},{s}\n"));
    }
    std::fs::write(&input, text).unwrap();
    let out = bin()
        .args(["halfspace", "--input"])
        .arg(&input)
        .args(["--mu", "0.5", "--excess", "0.5", "--eps", "400", "--beta", "0.2", "--seed", "2"])
        .output()
        .unwrap();
    let rep = report(&out);
    let normal: Vec<f64> =
        rep["outputs"]["normal"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(normal.len(), 2);
    assert!(normal[0] > 0.5, "separator should favour the labeled axis, got {normal:?}");
}

#[test]
fn coreset_weights_cover_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("blobs.csv");
    write_blobs(&input);
    let out = bin()
        .args(["coreset", "--input"])
        .arg(&input)
        .args(["--k", "2", "--eps", "500", "--seed", "11", "--const-zeta-override", "1.0"])
        .output()
        .unwrap();
    let rep = report(&out);
    let total = rep["outputs"]["total_weight"].as_u64().unwrap();
    // ε = 500 keeps the noisy weights within a whisker of n = 60.
    assert!((50..=70).contains(&total), "total weight {total}");
    assert!(rep["outputs"]["size"].as_u64().unwrap() >= 2);
}
