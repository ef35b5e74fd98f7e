use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gramctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gramctl")).args(args).output().expect("binary runs")
}

fn write_scenario(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.json");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn csv_column(path: &Path, col: usize) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn empty_task_list_echoes_model() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(dir.path(), r#"{"model": "scalar"}"#);
    let out = dir.path().join("out");
    let o = gramctl(&["run", &s, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["tasks"].as_array().unwrap().len(), 0);
    assert_eq!(r["model"]["dim"], 1);
    assert_eq!(r["scenario"]["model"], "scalar");
    assert_eq!(fs::read_dir(&out).unwrap().count(), 1);
}

#[test]
fn scalar_value_column_decreases_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramctl(&[
        "min-energy",
        "--model",
        r#"{"A": [[-1]], "B": [[1]]}"#,
        "--horizons",
        "0.5,1,2,4,8",
        "--target",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = csv_column(&dir.path().join("00_value_function.csv"), 2);
    assert_eq!(v.len(), 5);
    assert!(v.windows(2).all(|w| w[1] < w[0]));
    assert!((v[1] - 1.0 / (1.0 - (-2.0f64).exp())).abs() < 1e-10);
    assert!((v[4] - 1.0).abs() < 1e-6);
    let oracle = csv_column(&dir.path().join("00_value_function.csv"), 3);
    assert!(v.iter().zip(&oracle).all(|(a, b)| (a - b).abs() <= 1e-3 * a));
    let r = report(dir.path());
    assert_eq!(r["tasks"][0]["formulas"]["value"], "V(t,x) = 1/2 |Q_t^{-1/2} x|^2");
}

#[test]
fn landau_ginzburg_riccati_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramctl(&[
        "verify-riccati",
        "--model",
        "spectral:landau-ginzburg",
        "--order",
        "16",
        "--horizons",
        "0.05,0.1,0.3,1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(dir.path());
    assert_eq!(r["tasks"][0]["status"], "passed");
    assert!(r["tasks"][0]["result"]["shifted_family"]["rejected"].as_bool().unwrap());
    let rows = fs::read_to_string(dir.path().join("00_riccati_h_rows.csv")).unwrap();
    assert!(rows.starts_with("t [time],probe_i,probe_j,lhs,rhs,residual\n"));
}

#[test]
fn tight_tolerance_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramctl(&[
        "verify-riccati",
        "--model",
        "lg",
        "--order",
        "4",
        "--horizons",
        "0.1,0.5",
        "--tol",
        "1e-9",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(report(dir.path())["all_passed"], false);
}

#[test]
fn failing_task_does_not_stop_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(
        dir.path(),
        r#"{"model": {"A": [[1, 0], [0, -1]], "B": [[1], [1]]},
            "tasks": ["verify-lyapunov", "gramian"], "horizons": [1]}"#,
    );
    let o = gramctl(&["run", &s, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(dir.path());
    assert_eq!(r["tasks"][0]["status"], "error");
    assert!(r["tasks"][0]["error"].as_str().unwrap().contains("negative type"));
    assert_eq!(r["tasks"][1]["status"], "computed");
}

#[test]
fn schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"model": "scalar", "tasks": ["min-energy"], "horizons": [1], "targets": [[1, 2]]}"#, "targets[0]"),
        (r#"{"model": "scalar", "tasks": ["gramian"], "horizons": [1, -2]}"#, "horizons[1]"),
        (r#"{"model": "scalar", "tasks": ["gramain"]}"#, "tasks[0]"),
        (r#"{"model": "delay(0,1,1,1)", "tasks": ["min-energy"], "horizons": [1]}"#, "tasks[0]"),
        (r#"{"model": "spectral:heat"}"#, "model"),
        (r#"{"model": "scalar", "tasks": ["min-energy"], "horizons": [1]}"#, "targets"),
        (r#"{"model": "lg", "tasks": ["project-check"], "horizons": [1]}"#, "projection"),
    ];
    for (body, path) in cases {
        let s = write_scenario(dir.path(), body);
        let o = gramctl(&["run", &s, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{body}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(path), "{body}: {err}");
    }
}

#[test]
fn delay_and_shift_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = gramctl(&["null-controllability", "--model", "delay(0,1,1,1)", "--horizons", "0.5,2", "--mesh", "16", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(dir.path());
    let e = &r["tasks"][0]["result"]["entries"];
    assert_eq!(e[0]["result"]["satisfied"], false);
    assert_eq!(e[1]["result"]["satisfied"], true);
    let o = gramctl(&["sweep", "--model", "shift(64)", "--horizons", "0.25,1", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let d = csv_column(&dir.path().join("00_shift_defect.csv"), 1);
    assert!(d[0] >= 0.17 && d[1] < 1e-3);
}

#[test]
fn commuting_tasks_on_spectral_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for (cmd, extra) in [
        ("commuting-family", vec!["--k", "2,1,0.5,0"]),
        ("recover-L", vec!["--k", "2,1,0.5,0"]),
        ("project-check", vec!["--projection", "1,0,1,0"]),
    ] {
        let mut args = vec![cmd, "--model", "lg", "--order", "4", "--t0", "0.05", "--horizons", "0.3,0.6,1.2", "--out", out];
        args.extend(extra);
        let o = gramctl(&args);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stdout));
    }
}

#[test]
fn seed_and_tol_flags_reach_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = gramctl(&[
        "verify-lyapunov",
        "--model",
        "lg",
        "--order",
        "3",
        "--seed",
        "42",
        "--tol",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r["scenario"]["seed"], 42);
    assert_eq!(r["tasks"][0]["result"]["algebraic"]["tol"], 2e-10);
}
