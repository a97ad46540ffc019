//! End-to-end checks of the binary: exit codes, file outputs, and
//! determinism across runs and worker counts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matshrink"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_is_deterministic_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    fs::write(
        &config,
        r#"{
            "sizes": [[20, 10]],
            "profile": {"kind": "LinearRamp5", "q": -1.0},
            "noise": "Gaussian",
            "reps": 5,
            "seed": 9,
            "estimators": ["S2plus", "gd"]
        }"#,
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    for (out, workers) in [("a", None), ("b", None), ("c", Some("3"))] {
        let mut args = vec!["simulate", cfg, "--out", out];
        if let Some(w) = workers {
            args.extend(["--workers", w]);
        }
        let res = run(&args, dir.path());
        assert!(res.status.success(), "{}", stderr(&res));
    }
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    let b = fs::read(dir.path().join("b.csv")).unwrap();
    let c = fs::read(dir.path().join("c.csv")).unwrap();
    assert_eq!(a, b, "same flags must give identical bytes");
    assert_eq!(a, c, "worker count must not change results");
    assert!(String::from_utf8(a).unwrap().starts_with("n,p,"));
}

#[test]
fn bad_csv_exits_2_with_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2,3\n4,oops,6\n").unwrap();
    let res = run(&["estimate", bad.to_str().unwrap()], dir.path());
    assert_eq!(res.status.code(), Some(2));
    let err = stderr(&res);
    assert!(err.contains("row 2") && err.contains("column 2"), "{err}");
}

#[test]
fn unknown_estimator_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    fs::write(&x, "1,2,3\n4,5,6\n").unwrap();
    let res = run(
        &["estimate", x.to_str().unwrap(), "--estimator", "nope"],
        dir.path(),
    );
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("unknown estimator"));
}

#[test]
fn invalid_simulate_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, "{ not json").unwrap();
    let res = run(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn jsplus_with_small_spread_returns_row_means() {
    // trW ~ 0.013 is far below (n-1)p - 2 = 4, so the uniform factor
    // clamps to zero and every column is the row-mean vector
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    fs::write(&x, "0,0.1,0\n1,1,1.1\n").unwrap();
    let res = run(
        &[
            "estimate",
            x.to_str().unwrap(),
            "--estimator",
            "jsplus",
            "--out",
            "js",
        ],
        dir.path(),
    );
    assert!(res.status.success(), "{}", stderr(&res));
    let theta = fs::read_to_string(dir.path().join("js.theta.csv")).unwrap();
    let rows: Vec<Vec<f64>> = theta
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    for (row, want) in rows.iter().zip([0.1 / 3.0, 3.1 / 3.0]) {
        for v in row {
            assert!((v - want).abs() < 1e-12, "{v} vs {want}");
        }
    }
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("js.json")).unwrap()).unwrap();
    assert_eq!(sidecar["estimator"], "jsplus");
    assert!(sidecar["factors"].as_array().unwrap().iter().all(|f| f == 0.0));
}

#[test]
fn em_near_square_carries_instability_warning() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    // p = 5, n = 6: |n - p - 1| = 0
    let mut text = String::new();
    for i in 0..5 {
        let row: Vec<String> = (0..6)
            .map(|j| format!("{:.6}", ((i * 7 + j * 3 + 1) as f64).sin()))
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(&x, &text).unwrap();
    let res = run(
        &["estimate", x.to_str().unwrap(), "--estimator", "em", "--out", "em"],
        dir.path(),
    );
    assert!(res.status.success(), "{}", stderr(&res));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("em.json")).unwrap()).unwrap();
    assert!(sidecar["warning"].as_str().unwrap().contains("unstable"));
    assert!(stderr(&res).contains("unstable"));

    // well-separated dimensions carry no warning
    let tall = dir.path().join("tall.csv");
    let mut text = String::new();
    for i in 0..2 {
        let row: Vec<String> = (0..10)
            .map(|j| format!("{:.6}", ((i * 11 + j) as f64).cos()))
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(&tall, &text).unwrap();
    let res = run(
        &["estimate", tall.to_str().unwrap(), "--estimator", "em", "--out", "t"],
        dir.path(),
    );
    assert!(res.status.success(), "{}", stderr(&res));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
    assert!(sidecar.get("warning").is_none());
}

#[test]
fn minimax_check_prints_clause_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    let res = run(
        &[
            "minimax-check",
            "--n",
            "5",
            "--p",
            "4",
            "--ridge-mode",
            "trace",
            "--c",
            "9",
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(res.status.success(), "{}", stderr(&res));
    let stdout = String::from_utf8_lossy(&res.stdout).into_owned();
    assert!(stdout.contains("verdict: minimax"), "{stdout}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["condition_id"], "thm:min(ii)");
    assert_eq!(v["minimax"], true);
    assert_eq!(v["status"], "minimax");
}

#[test]
fn rmt_sweep_is_deterministic_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "rmt-sweep".to_string(),
            "--size".into(),
            "40x20".into(),
            "--reps".into(),
            "2".into(),
            "--seed".into(),
            "3".into(),
            "--out".into(),
            out.to_string(),
        ]
    };
    for (out, workers) in [("s1.csv", None), ("s2.csv", Some("2"))] {
        let mut a = args(out);
        if let Some(w) = workers {
            a.push("--workers".into());
            a.push(w.into());
        }
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        let res = run(&a, dir.path());
        assert!(res.status.success(), "{}", stderr(&res));
    }
    let s1 = fs::read_to_string(dir.path().join("s1.csv")).unwrap();
    let s2 = fs::read_to_string(dir.path().join("s2.csv")).unwrap();
    assert_eq!(s1, s2);
    let mut lines = s1.lines();
    assert_eq!(lines.next().unwrap(), "n,p,gamma,gap_a,gap_b,seed");
    assert_eq!(lines.count(), 2);
}
