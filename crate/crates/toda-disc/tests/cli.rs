//! Black-box tests of the `toda` binary: exit codes, config error paths,
//! artifact round trips, determinism.

use std::fs;
use std::path::Path;
use std::process::Command;

fn toda() -> Command {
    Command::new(env!("CARGO_BIN_EXE_toda"))
}

fn write_cfg(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn unknown_key_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        r#"{"r": 2, "weight": {"kind": "zero"}, "gamma": 1.0}"#,
    );
    let out = toda().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("gamma"), "stderr should name the bad key: {stderr}");
}

#[test]
fn unknown_weight_kind_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), r#"{"r": 2, "weight": {"kind": "cubic"}}"#);
    let out = toda().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage_off_lattice_rejected() {
    let dir = tempfile::tempdir().unwrap();
    // rings_per_unit 100 is not divisible by 3, so stage radius 2/3 misses
    let cfg = write_cfg(
        dir.path(),
        r#"{"r": 2, "weight": {"kind": "zero"}, "stages": 2,
            "master": {"rings_per_unit": 100, "n_theta": 8}}"#,
    );
    let out = toda().args(["exhaust", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not divisible"), "{stderr}");
}

#[test]
fn nonconvergence_exits_one_with_error_report() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let cfg = write_cfg(
        dir.path(),
        r#"{"r": 2, "weight": {"kind": "zero"},
            "lattice": {"n_r": 16, "n_theta": 8, "outer_radius": 0.5},
            "tolerances": {"max_newton": 0}}"#,
    );
    let out = toda()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("error.json")).unwrap()).unwrap();
    assert!(err["error"].is_string());
}

#[test]
fn bad_thread_env_exits_two() {
    let out = toda()
        .args(["solve", "--out", "/tmp/toda-cli-threads"])
        .env("TODA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_verify_suite_exits_two() {
    let out = toda().args(["verify", "--suite", "bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flag_overrides_config_rank() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let cfg = write_cfg(
        dir.path(),
        r#"{"r": 2, "weight": {"kind": "zero"},
            "lattice": {"n_r": 16, "n_theta": 8, "outer_radius": 0.5}}"#,
    );
    let out = toda()
        .args(["solve", "--config"])
        .arg(&cfg)
        .args(["--r", "3", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("state/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["r"], 3);
    // r = 3 has two unknown fields on disc
    assert!(out_dir.join("state/u2.toda").exists());
}

#[test]
fn solve_then_export_round_trips_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let cfg = write_cfg(
        dir.path(),
        r#"{"r": 2, "weight": {"kind": "differential", "coeffs": [[0.0, 0.0], [1.0, 0.0]]},
            "lattice": {"n_r": 20, "n_theta": 8, "outer_radius": 0.5}}"#,
    );
    let run = toda()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));

    let export_dir = dir.path().join("exported");
    let exp = toda()
        .args(["export", "--state"])
        .arg(out_dir.join("state"))
        .arg("--out")
        .arg(&export_dir)
        .output()
        .unwrap();
    assert_eq!(exp.status.code(), Some(0), "{}", String::from_utf8_lossy(&exp.stderr));
    let csv = fs::read_to_string(export_dir.join("export/u1.csv")).unwrap();
    assert!(csv.starts_with("rho,theta,value\n"));
    assert_eq!(csv.lines().count(), 1 + 20 * 8);

    // field file round trip: header + payload survive a re-read
    let (field, name) = toda_disc::io::read_field(&out_dir.join("state/u1.toda")).unwrap();
    assert_eq!(name, "u_1");
    assert_eq!(field.grid.n_r, 20);
    assert_eq!(field.grid.n_theta, 8);
}

#[test]
fn identical_invocations_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        r#"{"r": 3, "weight": {"kind": "differential", "coeffs": [[0.5, 0.25]]},
            "lattice": {"n_r": 20, "n_theta": 8, "outer_radius": 0.5},
            "betas": [2.0], "seed": 7}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = toda()
            .args(["solve", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for rel in ["report.json", "state/u1.toda", "state/u2.toda", "state/E.toda", "entropy_beta2.csv"] {
        assert_eq!(
            fs::read(a.join(rel)).unwrap(),
            fs::read(b.join(rel)).unwrap(),
            "artifact {rel} differs between identical runs"
        );
    }
}

#[test]
fn heatmaps_emitted_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let cfg = write_cfg(
        dir.path(),
        r#"{"r": 2, "weight": {"kind": "zero"},
            "lattice": {"n_r": 16, "n_theta": 8, "outer_radius": 0.5}}"#,
    );
    let out = toda()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--heatmaps")
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let png = fs::read(out_dir.join("state/u1.png")).unwrap();
    assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    assert!(out_dir.join("state/u1_log.png").exists());
}
