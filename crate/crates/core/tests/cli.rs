use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("presets")
        .join(name)
}

fn selftune(dir: &TempDir, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selftune"))
        .args(args)
        .env("SELFTUNE_OUT_DIR", dir.path())
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &TempDir, name: &str, from: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, edit(std::fs::read_to_string(preset(from)).unwrap())).unwrap();
    path
}

#[test]
fn simulate_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset("neural-integrator.toml");
    let out = selftune(&dir, &["simulate", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("neural-integrator.csv")).unwrap();
    assert!(csv.starts_with("t,x,mu"));
    let report: serde_json::Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("neural-integrator.report.json")).unwrap(),
    )
    .unwrap();
    assert!(report["final_mu_error"].as_f64().unwrap() < 1e-8);
    assert_eq!(report["settled"], true);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let missing = selftune(&dir, &["simulate", "/nonexistent/config.toml"]);
    assert_eq!(missing.status.code(), Some(2));

    let zero = write_config(&dir, "zero.toml", "neural-integrator.toml", |s| {
        s.replace("x = 2.0", "x = 0.0")
    });
    let out = selftune(&dir, &["simulate", zero.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).starts_with("error kind=domain_violation msg=\""),
        "{}",
        stderr(&out)
    );

    let unknown = write_config(&dir, "unknown.toml", "neural-integrator.toml", |s| {
        format!("{s}\nbogus = 1\n")
    });
    let out = selftune(&dir, &["simulate", unknown.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // A step budget too small to reach the horizon is an integration failure.
    let starved = write_config(&dir, "starved.toml", "neural-integrator.toml", |s| {
        s.replace("[integrator]", "[integrator]\nmax_steps = 5")
    });
    let out = selftune(&dir, &["simulate", starved.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn sweep_rows_and_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset("neural-integrator.toml");
    let cfg = cfg.to_str().unwrap();
    let out = selftune(
        &dir,
        &["sweep", cfg, "--param", "law.b", "--values", "0.5,1,2"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(dir.path().join("neural-integrator.sweep.csv").exists());

    let out = selftune(&dir, &["sweep", cfg, "--param", "law.b", "--values", ""]);
    assert_eq!(out.status.code(), Some(2));
    let out = selftune(
        &dir,
        &["sweep", cfg, "--param", "law.nope", "--values", "1"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_json_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset("neural-integrator.toml");
    let out = selftune(
        &dir,
        &[
            "--format",
            "json",
            "sweep",
            cfg.to_str().unwrap(),
            "--param",
            "model.mu0",
            "--values",
            "-0.5,0.5",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
}

#[test]
fn analyze_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let hair = preset("hair-cell.toml");
    let hair = hair.to_str().unwrap();
    for (what, key) in [
        ("floquet", "spectral_radius"),
        ("kyp", "max_eigenvalue"),
        ("positive-real", "margin"),
        ("sector", "max_relative_error"),
    ] {
        let out = selftune(&dir, &["analyze", hair, "--what", what]);
        assert!(out.status.success(), "{what}: {}", stderr(&out));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(find_key(&v, key), "{what}: no {key} in {v}");
    }
    let neural = preset("neural-integrator.toml");
    for what in ["linearize", "lyapunov"] {
        let out = selftune(&dir, &["analyze", neural.to_str().unwrap(), "--what", what]);
        assert!(out.status.success(), "{what}: {}", stderr(&out));
    }
    let out = selftune(
        &dir,
        &["analyze", neural.to_str().unwrap(), "--what", "floquet"],
    );
    assert_eq!(out.status.code(), Some(2));
}

fn find_key(v: &serde_json::Value, key: &str) -> bool {
    match v {
        serde_json::Value::Object(m) => m.contains_key(key) || m.values().any(|x| find_key(x, key)),
        serde_json::Value::Array(a) => a.iter().any(|x| find_key(x, key)),
        _ => false,
    }
}

#[test]
fn gain_curve_rows_and_amplitude_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset("hair-cell-forced.toml");
    let cfg = cfg.to_str().unwrap();
    let out = selftune(&dir, &["gain-curve", cfg, "--amplitudes", "0.01,0.1,1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);

    let out = selftune(&dir, &["gain-curve", cfg, "--amplitudes", "1,0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn certify_flipped_law_reports_witness() {
    let dir = tempfile::tempdir().unwrap();
    let flipped = write_config(&dir, "flipped.toml", "sigmoid-perturbed.toml", |s| {
        s.replace(
            "kind = \"sigmoid\"",
            "kind = \"custom\"\nf = \"ln(x)\"\ng = \"mu\"",
        )
    });
    let out = selftune(
        &dir,
        &["certify", flipped.to_str().unwrap(), "--horizon", "50"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(find_key(&v, "witness"), "{v}");
    assert!(find_key(&v, "residual_sweep_error"), "{v}");
}
