//! Acceptance checks for the CLI: determinism, parse round-trips and exit
//! codes on the error paths.

use std::path::PathBuf;
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splab"))
}

fn write_config(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SYMMETRIC_CFG: &str = r#"{
  "system": {"kind": "symmetric", "d": 2, "N": 8},
  "seed": 7
}"#;

const QUIVER_CFG: &str = r#"{
  "system": {"kind": "quiver", "P": [[1.0, 1.0], [1.0, 0.0]], "N": 6},
  "seed": 7
}"#;

const BAD_QUIVER_CFG: &str = r#"{
  "system": {"kind": "quiver", "P": [[1.0, 0.0], [1.0, 0.0]], "N": 4},
  "seed": 7
}"#;

#[test]
fn criterion_11_determinism_byte_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "sym.json", SYMMETRIC_CFG);
    let out1 = dir.path().join("r1.json");
    let out2 = dir.path().join("r2.json");
    for out in [&out1, &out2] {
        let status = bin()
            .args(["verify"])
            .arg(&cfg)
            .args(["--out"])
            .arg(out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0), "full suite must pass");
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    let ok = a == b;
    println!(
        "[acceptance 11a] {}: byte-identical verify reports ({} bytes)",
        if ok { "PASS" } else { "FAIL" },
        a.len()
    );
    assert!(ok);
}

#[test]
fn criterion_11_parse_roundtrip() {
    let sys = std::sync::Arc::new(splab_core::systems::build_symmetric(2, 4).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut ok = true;
    for _ in 0..50 {
        let e = splab_core::expr::random_expr(&mut rng, &sys, 3);
        let text = splab_core::expr::print(&e);
        match splab_core::expr::parse(&text) {
            Ok(back) if back == e => {}
            _ => ok = false,
        }
    }
    println!(
        "[acceptance 11b] {}: parse(print(ast)) round-trip on 50 seeded ASTs",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}

#[test]
fn criterion_11_error_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "sym.json", SYMMETRIC_CFG);
    let bad_cfg = write_config(&dir, "bad.json", BAD_QUIVER_CFG);

    // Malformed expression: usage error.
    let parse_err = bin()
        .args(["scan", "--op", "S1[e1)*"])
        .arg(&cfg)
        .output()
        .unwrap();
    // Zero column in P: config error with a diagnostic naming the column.
    let faithless = bin().args(["build"]).arg(&bad_cfg).output().unwrap();
    let faithless_msg = String::from_utf8_lossy(&faithless.stderr).to_string();
    // Unknown fiber label: usage error.
    let label_err = bin()
        .args(["scan", "--op", "S1[e7]"])
        .arg(&cfg)
        .output()
        .unwrap();
    // Absurd tolerance: suites run, residuals exceed it, invariant failure.
    let invariant = bin()
        .args(["verify"])
        .arg(&cfg)
        .args(["--tol", "1e-30"])
        .output()
        .unwrap();

    let ok = parse_err.status.code() == Some(2)
        && faithless.status.code() == Some(2)
        && faithless_msg.contains("column 2")
        && label_err.status.code() == Some(2)
        && invariant.status.code() == Some(1);
    println!(
        "[acceptance 11c] {}: exit codes parse={:?} faithless={:?} label={:?} invariant={:?}",
        if ok { "PASS" } else { "FAIL" },
        parse_err.status.code(),
        faithless.status.code(),
        label_err.status.code(),
        invariant.status.code()
    );
    assert!(ok);
}

#[test]
fn quiver_full_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "quiver.json", QUIVER_CFG);
    let out = dir.path().join("quiver.json.out");
    let status = bin()
        .args(["verify"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::json!(true));
    // The ideal suite includes the S_n S_n* reconstruction of R_n'.
    let worst = report["results"]["ideal"]["reconstruction_worst"].as_f64().unwrap();
    assert!(worst <= 1e-10);
}

#[test]
fn scan_and_cpnorm_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "sym.json", SYMMETRIC_CFG);
    let scan = bin()
        .args(["scan", "--op", "S1[e1]*S1[e2]~-S1[e2]~*S1[e1]"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(scan.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&scan.stdout).unwrap();
    assert_eq!(v["results"]["verdict"], serde_json::json!("in_ideal"));

    let csv = bin()
        .args(["scan", "--op", "Q3", "--format", "csv"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(csv.status.code(), Some(0));
    let table = String::from_utf8(csv.stdout).unwrap();
    assert!(table.starts_with("op,kind,n,value,exact"));

    let cp = bin()
        .args(["cpnorm", "--op", "S1[e1]"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(cp.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&cp.stdout).unwrap();
    let est = v["results"]["estimate"].as_f64().unwrap();
    assert!((est - 1.0).abs() < 1e-10);

    // CSV is not defined for verify.
    let bad = bin()
        .args(["verify", "--format", "csv"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sphere_rep_wold_and_morita_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "sym.json", SYMMETRIC_CFG);

    let sphere = bin()
        .args(["sphere", "--coeffs", "1,-1,0"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(sphere.status.code(), Some(0), "{}", String::from_utf8_lossy(&sphere.stderr));

    // Evaluation representation at z = (3/5, 4/5 i) as a rep file.
    let rep_file = write_config(
        &dir,
        "rep.json",
        r#"{
  "dims": [1],
  "T1": {"1": [[[0.6, 0.0]]], "2": [[[0.0, 0.8]]]}
}"#,
    );
    let rep = bin().args(["rep"]).arg(&cfg).arg(&rep_file).output().unwrap();
    assert_eq!(rep.status.code(), Some(0), "{}", String::from_utf8_lossy(&rep.stderr));
    let v: serde_json::Value = serde_json::from_slice(&rep.stdout).unwrap();
    assert_eq!(
        v["results"]["classification"]["fully_coisometric"],
        serde_json::json!(true)
    );

    let wold = bin().args(["wold"]).arg(&cfg).arg(&rep_file).output().unwrap();
    assert_eq!(wold.status.code(), Some(0));

    // An inconsistent representation is an invariant failure, not a usage
    // error: two noncommuting generators on SSP_2.
    let bad_rep = write_config(
        &dir,
        "bad_rep.json",
        r#"{
  "dims": [2],
  "T1": {
    "1": [[[0.0,0.0],[1.0,0.0]],[[0.0,0.0],[0.0,0.0]]],
    "2": [[[0.0,0.0],[0.0,0.0]],[[1.0,0.0],[0.0,0.0]]]
  }
}"#,
    );
    let bad = bin().args(["rep"]).arg(&cfg).arg(&bad_rep).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));

    let morita_cfg = write_config(
        &dir,
        "morita.json",
        r#"{
  "system": {"kind": "symmetric", "d": 2, "N": 5},
  "seed": 3,
  "morita": {"k": 2, "samples": 10}
}"#,
    );
    let morita = bin().args(["morita"]).arg(&morita_cfg).output().unwrap();
    assert_eq!(morita.status.code(), Some(0), "{}", String::from_utf8_lossy(&morita.stderr));
    let v: serde_json::Value = serde_json::from_slice(&morita.stdout).unwrap();
    assert_eq!(v["results"]["validation"]["z_dims_ok"], serde_json::json!(true));

    // Flat morita schema: {"k", "system", "N", "samples", "seed"}.
    let flat_cfg = write_config(
        &dir,
        "morita_flat.json",
        r#"{
  "k": 3,
  "system": {"kind": "symmetric", "d": 2},
  "N": 5,
  "samples": 8,
  "seed": 3
}"#,
    );
    let flat = bin().args(["morita"]).arg(&flat_cfg).output().unwrap();
    assert_eq!(flat.status.code(), Some(0), "{}", String::from_utf8_lossy(&flat.stderr));
    let v: serde_json::Value = serde_json::from_slice(&flat.stdout).unwrap();
    assert_eq!(v["results"]["k"], serde_json::json!(3));
}
