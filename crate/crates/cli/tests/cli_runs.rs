//! End-to-end runs of the kamfg binary: artifact layout, report contents,
//! exit codes, determinism, and the verify round trip.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kamfg::grid::{GridFunction, GridMeasure};
use kamfg_cli::output::{EquilibriumReport, KsetReport, ResidualsReport};

const FLAT: &str = r#"{
  "grid": {"n": 128},
  "model": {"kinetic": "1", "potential": "0"}
}"#;

// kset tolerance pinned to 8 h^2 for n = 128 so the contact set is a single node
const COSINE: &str = r#"{
  "grid": {"n": 128},
  "model": {"kinetic": "1", "potential": "cos(2*pi*x)"},
  "equilibrium": {"kset_tol_h": 0.00048828125}
}"#;

fn write_config(dir: &Path, contents: &str) -> PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, contents).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kamfg")).args(args).output().unwrap()
}

fn expect_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn flat_equilibrium_converges_and_reports_a_tiny_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FLAT);
    let out_dir = dir.path().join("out");

    let out = run(&[
        "equilibrium",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "42",
    ]);
    expect_code(&out, 0);

    let report: EquilibriumReport = read_json(&out_dir.join("report.json"));
    assert!(report.converged);
    assert!(report.d1_gap <= 1e-10, "d1 gap {}", report.d1_gap);
    assert_eq!(report.grid_n, 128);
    assert_eq!(report.seed, 42);
    assert!(report.support_leak <= 1e-12);

    let u = GridFunction::from_csv(&fs::read_to_string(out_dir.join("u.csv")).unwrap()).unwrap();
    assert_eq!(u.values().len(), 128);
    assert!(u.values().iter().all(|v| v.abs() <= 1e-8));
    let m = GridMeasure::from_csv(&fs::read_to_string(out_dir.join("m.csv")).unwrap()).unwrap();
    let mass: f64 = m.weights().iter().sum();
    assert!((mass - 1.0).abs() <= 1e-12);
}

#[test]
fn identical_runs_produce_byte_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COSINE);
    let mut artifacts: Vec<Vec<(String, Vec<u8>)>> = Vec::new();

    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = run(&[
            "equilibrium",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--emit-svg",
        ]);
        expect_code(&out, 0);
        let mut batch = Vec::new();
        for name in ["u.csv", "m.csv", "report.json", "u.svg", "m.svg"] {
            batch.push((name.to_string(), fs::read(out_dir.join(name)).unwrap()));
        }
        artifacts.push(batch);
    }

    for ((name, first), (_, second)) in artifacts[0].iter().zip(&artifacts[1]) {
        assert_eq!(first, second, "{name} differs between identical runs");
    }
    let svg = String::from_utf8(artifacts[0][3].1.clone()).unwrap();
    assert!(svg.starts_with("<svg xmlns="));
    assert!(svg.trim_end().ends_with("</svg>"));
}

#[test]
fn mather_on_the_cosine_model_pins_the_contact_node() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COSINE);
    let out_dir = dir.path().join("out");

    let out = run(&[
        "mather",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    expect_code(&out, 0);

    let kset: KsetReport = read_json(&out_dir.join("kset.json"));
    assert_eq!(kset.grid_n, 128);
    assert_eq!(kset.tol_h, 0.00048828125);
    assert_eq!(kset.nodes.len(), 1, "contact set should be a single node");
    let node = &kset.nodes[0];
    assert_eq!(node.index, 0);
    assert_eq!(node.x, 0.0);
    assert!((node.u + 1.0).abs() <= 0.05, "u at the contact node: {}", node.u);
    assert!(node.h_residual <= kset.tol_h);
    assert!(node.g_residual <= kset.tol_g);
}

#[test]
fn grid_resolution_override_propagates_to_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FLAT);
    let out_dir = dir.path().join("out");

    let out = run(&[
        "mather",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--grid-n",
        "256",
    ]);
    expect_code(&out, 0);

    // the flat model is critical everywhere, so every node qualifies
    let kset: KsetReport = read_json(&out_dir.join("kset.json"));
    assert_eq!(kset.grid_n, 256);
    assert_eq!(kset.nodes.len(), 256);
}

#[test]
fn a_sign_changing_kinetic_coefficient_is_rejected_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"grid": {"n": 128}, "model": {"kinetic": "cos(2*pi*x)", "potential": "0"}}"#,
    );
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    expect_code(&out, 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("kinetic_coeff not positive"), "stderr: {stderr}");
    assert!(stderr.contains("a(0.5) = -1"), "stderr: {stderr}");
}

#[test]
fn unknown_config_keys_are_rejected_with_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
  "grid": {"n": 128},
  "model": {"kinetic": "1", "potential": "0"},
  "coupling": {"strength": 0.5}
}"#,
    );
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    expect_code(&out, 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("coupling.strength"), "stderr: {stderr}");
    assert!(stderr.contains("unknown field"), "stderr: {stderr}");
}

#[test]
fn assumption_checks_pass_for_the_cosine_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COSINE);
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    expect_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.matches("[ok]").count() >= 6, "stdout: {stdout}");
    assert!(stdout.contains("all assumptions hold"), "stdout: {stdout}");
}

#[test]
fn solve_hj_writes_parsable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COSINE);
    let out_dir = dir.path().join("out");

    let out = run(&[
        "solve-hj",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    expect_code(&out, 0);

    let u_minus =
        GridFunction::from_csv(&fs::read_to_string(out_dir.join("u_minus.csv")).unwrap()).unwrap();
    let u_plus =
        GridFunction::from_csv(&fs::read_to_string(out_dir.join("u_plus.csv")).unwrap()).unwrap();
    assert_eq!(u_minus.values().len(), 128);
    assert_eq!(u_plus.values().len(), 128);

    let report: ResidualsReport = read_json(&out_dir.join("residuals.json"));
    assert!(report.u_minus.converged);
    assert!(report.hj_residual <= 5.0 / 128.0, "residual {}", report.hj_residual);
    assert!(report.forward_excess <= 1e-12, "excess {}", report.forward_excess);
}

#[test]
fn critical_value_prints_the_level_and_cross_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), COSINE);
    let out = run(&["critical-value", "--config", cfg.to_str().unwrap()]);
    expect_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("admissible level a_m"), "stdout: {stdout}");
    assert!(stdout.contains("critical value"), "stdout: {stdout}");
    assert!(stdout.contains("cross-check"), "stdout: {stdout}");
}

#[test]
fn verify_reproduces_recorded_residuals_and_catches_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FLAT);
    let out_dir = dir.path().join("out");

    let run_args = |sub: &str| {
        run(&[
            sub,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
    };
    expect_code(&run_args("equilibrium"), 0);

    let out = run_args("verify");
    expect_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ok"), "stdout: {stdout}");
    assert!(!stdout.contains("MISMATCH"), "stdout: {stdout}");

    let report_path = out_dir.join("report.json");
    let mut tampered: serde_json::Value = read_json(&report_path);
    tampered["hj_residual"] = serde_json::json!(1e-3);
    fs::write(&report_path, serde_json::to_string_pretty(&tampered).unwrap()).unwrap();

    let out = run_args("verify");
    expect_code(&out, 1);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("MISMATCH"), "stdout: {stdout}");
}

#[test]
fn hitting_the_iteration_cap_exits_with_the_reported_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
  "grid": {"n": 128},
  "model": {"kinetic": "1", "potential": "cos(2*pi*x)"},
  "equilibrium": {"max_outer": 1}
}"#,
    );
    let out_dir = dir.path().join("out");

    let out = run(&[
        "equilibrium",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    expect_code(&out, 2);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("did not converge"), "stdout: {stdout}");

    // artifacts are still written so the run can be inspected
    let report: EquilibriumReport = read_json(&out_dir.join("report.json"));
    assert!(!report.converged);
    assert_eq!(report.iterations, 1);
}
