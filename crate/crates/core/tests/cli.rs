use std::path::Path;
use std::process::{Command, Output};

use h2damp::cli::commands::SWEEP_HEADER;
use h2damp::model::{
    build_example1, read_model, write_model, GainBounds, SecondOrderSystem, SparseMatrix,
};
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

const SMALL: &str = r#"
[model]
size = 60
j = 5
k = 40

[reduction]
r = 8

[optimizer]
tol_x = 1e-3
tol_f = 1e-3
"#;

fn h2damp(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_h2damp"));
    cmd.args(args)
        .env_remove("H2DAMP_CONFIG")
        .env("RUST_LOG", "off");
    if let Some(c) = config {
        cmd.env("H2DAMP_CONFIG", c);
    }
    cmd.output().expect("binary runs")
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn generate_example1_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = h2damp(
        &[
            "generate",
            "--preset",
            "ex1-desk",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cfg = h2damp::cli::Preset::Ex1Desk.config();
    let expected = build_example1(300, 0.005, cfg.model.j, cfg.model.k).unwrap();
    assert_eq!(read_model(dir.path()).unwrap(), expected);
}

#[test]
fn generate_example2_has_2d_plus_1_states() {
    let dir = tempfile::tempdir().unwrap();
    let out = h2damp(
        &[
            "generate",
            "--preset",
            "ex2-desk",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert!(out.status.success());
    assert_eq!(read_model(dir.path()).unwrap().n(), 301);
}

#[test]
fn bad_damper_indices_are_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = h2damp(
        &[
            "generate",
            "--j",
            "80",
            "--k",
            "80",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    let out = h2damp(&["optimize", "--r", "7"], None);
    assert_eq!(out.status.code(), Some(2));
    let out = h2damp(&["optimize", "--preset", "nope"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn optimize_is_deterministic_and_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = h2damp(&["optimize", "--mode", "predetermined"], Some(&cfg));
    let b = h2damp(&["optimize", "--mode", "predetermined"], Some(&cfg));
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(a.stdout, b.stdout);
    let report = json(&a);
    for g in report["gains"].as_array().unwrap() {
        let g = g.as_f64().unwrap();
        assert!(g.is_finite() && g >= 0.0);
    }
    assert!(report["surrogate_h2"].as_f64().unwrap().is_finite());
    assert!(report.get("timings").is_none());
}

#[test]
fn adaptive_report_on_desk_example() {
    let out = h2damp(&["optimize", "--preset", "ex1-desk", "--no-oracle"], None);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out);
    assert_eq!(report["mode"], "adaptive");
    assert_eq!(report["strategy"], "c");
    assert!(report["converged"].as_bool().unwrap());
    assert!(report["gains"]
        .as_array()
        .unwrap()
        .iter()
        .all(|g| g.as_f64().unwrap() >= 0.0));
    // a finite value means the reduced linearization was Hurwitz at g*
    assert!(report["surrogate_h2"].as_f64().unwrap().is_finite());
}

#[test]
fn timings_flag_adds_timings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = h2damp(
        &["optimize", "--mode", "predetermined", "--timings"],
        Some(&cfg),
    );
    let report = json(&out);
    assert!(report["timings"]["total"].as_f64().unwrap() > 0.0);
}

#[test]
fn outer_cap_reports_nonconvergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let json_path = dir.path().join("report.json");
    let out = h2damp(
        &[
            "optimize",
            "--max-outer",
            "1",
            "--json",
            json_path.to_str().unwrap(),
        ],
        Some(&cfg),
    );
    assert_eq!(out.status.code(), Some(3));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(report["converged"], false);
    assert_eq!(report["outer_iterations"], 1);
}

#[test]
fn oracle_cap_refusal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = h2damp(
        &["optimize", "--with-oracle", "--oracle-cap", "10"],
        Some(&cfg),
    );
    assert_eq!(out.status.code(), Some(4));
    let out = h2damp(
        &["h2", "--gains", "1,1", "--oracle", "--oracle-cap", "10"],
        Some(&cfg),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn config_flag_and_environment_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = h2damp(&["optimize", "--mode", "predetermined"], Some(&cfg));
    let b = h2damp(
        &[
            "optimize",
            "--mode",
            "predetermined",
            "--config",
            cfg.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn single_row_sweep_matches_optimize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("sweep.toml");
    std::fs::write(&cfg_path, format!("{SMALL}\n[sweep]\ngrid = [[5, 40]]\n")).unwrap();
    let csv_path = dir.path().join("rows.csv");
    let sweep = h2damp(
        &[
            "sweep",
            "--mode",
            "predetermined",
            "--csv",
            csv_path.to_str().unwrap(),
        ],
        Some(&cfg_path),
    );
    assert_eq!(
        sweep.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&sweep.stderr)
    );
    let summary = json(&sweep);
    assert_eq!(summary["rows"], 1);

    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, SWEEP_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);

    let opt = json(&h2damp(
        &["optimize", "--mode", "predetermined"],
        Some(&cfg_path),
    ));
    let gains: Vec<f64> = rows[0][3].split(';').map(|x| x.parse().unwrap()).collect();
    let expected: Vec<f64> = opt["gains"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g.as_f64().unwrap())
        .collect();
    assert_eq!(gains, expected);
    assert_eq!(
        rows[0][4].parse::<f64>().unwrap(),
        opt["surrogate_h2"].as_f64().unwrap()
    );
    assert_eq!(
        rows[0][10].parse::<usize>().unwrap(),
        opt["reduced_dim"].as_u64().unwrap() as usize
    );
    // 17 significant digits
    assert!(rows[0][4].contains('e') && rows[0][4].split('e').next().unwrap().len() == 18);
}

#[test]
fn sweep_without_csv_prints_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg_path,
        format!("{SMALL}\n[sweep]\ngrid = [[5, 40], [10, 50]]\n"),
    )
    .unwrap();
    let out = h2damp(&["sweep", "--mode", "predetermined"], Some(&cfg_path));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], SWEEP_HEADER.join(","));
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("5,40,ok,"));
    assert!(lines[2].starts_with("10,50,ok,"));
}

fn scalar_model(dir: &Path, k: f64, alpha_c: f64) {
    let sys = SecondOrderSystem::new(
        DVector::from_element(1, 1.0),
        SparseMatrix::from_triplets(1, 1, [(0, 0, k)]),
        alpha_c,
        SparseMatrix::from_triplets(1, 1, [(0, 0, 1.0)]),
        vec![0],
        vec![GainBounds::NONNEGATIVE],
        DMatrix::from_element(1, 1, 2.0),
        DMatrix::from_element(1, 1, 3.0),
    )
    .unwrap();
    write_model(&sys, dir).unwrap();
}

fn files_args<'a>(dir: &'a str, gains: &'a str) -> Vec<&'a str> {
    vec![
        "h2",
        "--example",
        "files",
        "--model-dir",
        dir,
        "--x0",
        "1",
        "--gains",
        gains,
        "--oracle",
    ]
}

const SCALAR_CONFIG: &str = r#"
[sampling]
samples = [[0.0]]
g0 = [0.0]
"#;

#[test]
fn h2_on_scalar_model_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    scalar_model(dir.path(), 4.0, 0.1);
    let cfg = dir.path().join("scalar.toml");
    std::fs::write(&cfg, SCALAR_CONFIG).unwrap();
    let d = dir.path().to_str().unwrap();
    let out = h2damp(&files_args(d, "0"), Some(&cfg));
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["oracle"]["status"], "stable");
    // he / (s^2 + c s + k) with c = 2 alpha_c sqrt(k): ||F||^2 = (he)^2 / (2 c k)
    let c: f64 = 2.0 * 0.1 * 2.0;
    let expected = (36.0 / (2.0 * c * 4.0)).sqrt();
    let got = v["oracle"]["value"].as_f64().unwrap();
    assert!(
        (got - expected).abs() <= 1e-12 * expected,
        "{got} vs {expected}"
    );
}

#[test]
fn h2_reports_unstable_for_negative_damping() {
    let dir = tempfile::tempdir().unwrap();
    scalar_model(dir.path(), 4.0, 0.1);
    let cfg = dir.path().join("scalar.toml");
    std::fs::write(&cfg, SCALAR_CONFIG).unwrap();
    let d = dir.path().to_str().unwrap();
    let out = h2damp(&files_args(d, "-1"), Some(&cfg));
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["oracle"]["status"], "unstable");
    assert!(v["oracle"]["value"].is_null());
}

#[test]
fn h2_surrogate_close_to_oracle_at_a_sample() {
    let out = h2damp(
        &[
            "h2",
            "--preset",
            "ex1-desk",
            "--gains",
            "1000,1000",
            "--surrogate",
            "--oracle",
        ],
        None,
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert!(v["relative_gap"].as_f64().unwrap() <= 1e-3);
}
