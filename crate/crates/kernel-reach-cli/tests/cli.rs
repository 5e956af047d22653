//! End-to-end tests of the `kernel-reach` binary: exit codes, file
//! artifacts, reproducibility, and config/flag interplay.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kernel-reach"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn zero_sample_size_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--out", dir.path().to_str().unwrap(), "sample", "--m", "0"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("error:"));
}

#[test]
fn same_seed_gives_identical_sample_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let a = run(&["--out", d, "--seed", "42", "sample", "--m", "80", "--file", "a.csv"]);
    assert_eq!(a.status.code(), Some(0), "stderr: {}", stderr(&a));
    let b = run(&["--out", d, "--seed", "42", "sample", "--m", "80", "--file", "b.csv"]);
    assert_eq!(b.status.code(), Some(0));
    let bytes_a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let bytes_b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(bytes_a, bytes_b);
    let c = run(&["--out", d, "--seed", "43", "sample", "--m", "80", "--file", "c.csv"]);
    assert_eq!(c.status.code(), Some(0));
    let bytes_c = std::fs::read(dir.path().join("c.csv")).unwrap();
    assert_ne!(bytes_a, bytes_c);
    let header = String::from_utf8(bytes_a).unwrap();
    assert!(header.starts_with("# kernel-reach sample v1; n=2; m=1; M=80; seed=42; system=integrator\n"));
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 1\n[sample]\nm = 40\n").unwrap();
    let a = run(&["--config", cfg.to_str().unwrap(), "--out", d, "sample", "--file", "a.csv"]);
    assert_eq!(a.status.code(), Some(0), "stderr: {}", stderr(&a));
    let b = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        d,
        "--seed",
        "9",
        "sample",
        "--file",
        "b.csv",
    ]);
    assert_eq!(b.status.code(), Some(0));
    let text_a = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let text_b = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert!(text_a.contains("seed=1;"));
    assert!(text_b.contains("seed=9;"));
}

#[test]
fn reach_writes_field_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&[
        "--out", d, "--seed", "5", "reach", "--method", "exact", "--m", "120", "--grid", "8,8",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let json_text = std::fs::read_to_string(dir.path().join("field-exact.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&json_text).unwrap();
    assert_eq!(doc["meta"]["method"], "exact");
    assert_eq!(doc["meta"]["system"], "integrator");
    assert_eq!(doc["points"].as_array().unwrap().len(), 64);
    assert_eq!(doc["layers"].as_array().unwrap().len(), 6);
    for layer in doc["layers"].as_array().unwrap() {
        for v in layer.as_array().unwrap() {
            let v = v.as_f64().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
    let csv_text = std::fs::read_to_string(dir.path().join("field-exact.csv")).unwrap();
    let mut lines = csv_text.lines();
    assert_eq!(lines.next().unwrap(), "x_1,x_2,V0");
    assert_eq!(lines.count(), 64);
}

#[test]
fn validate_against_itself_reports_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 11\n[sample]\nm = 100\n[validate]\ngrid = [6, 6]\n",
    )
    .unwrap();
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        d,
        "validate",
        "--candidate",
        "exact",
        "--baseline",
        "exact",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("validate.json")).unwrap())
            .unwrap();
    assert_eq!(summary["max_abs_error"].as_f64().unwrap(), 0.0);
    assert_eq!(summary["mean_abs_error"].as_f64().unwrap(), 0.0);
    let errors = std::fs::read_to_string(dir.path().join("errors-exact-vs-exact.csv")).unwrap();
    let mut lines = errors.lines();
    assert_eq!(lines.next().unwrap(), "x_1,x_2,exact,exact,abs_error");
    assert_eq!(lines.count(), 36);
}

#[test]
fn dimension_mismatches_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    // Constant policy with the wrong input width.
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[policy]\nkind = \"constant\"\nvalue = [0.0, 0.0]\n[sample]\nm = 50\n",
    )
    .unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", d, "reach", "--grid", "5,5"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));

    // Reusing an integrator sample file under a quadrotor system.
    let gen = run(&["--out", d, "sample", "--m", "30", "--file", "int.csv"]);
    assert_eq!(gen.status.code(), Some(0));
    let cfg2 = dir.path().join("run2.toml");
    std::fs::write(
        &cfg2,
        "[system]\nname = \"quadrotor\"\n[sample]\nm = 30\nfile = \"int.csv\"\n[rff]\nd = 100\n",
    )
    .unwrap();
    let out2 = run(&["--config", cfg2.to_str().unwrap(), "--out", d, "reach", "--method", "rff"]);
    assert_eq!(out2.status.code(), Some(2), "stderr: {}", stderr(&out2));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[sample]\nm = 10\nnot_a_key = 1\n").unwrap();
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "sample",
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn oversized_runs_need_the_huge_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "reach",
        "--method",
        "exact",
        "--m",
        "200000",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--huge"), "stderr: {}", stderr(&out));
}

#[test]
fn mc_writes_probability_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&[
        "--out", d, "--seed", "2", "mc", "--trials", "500", "--point", "0.6,0.0", "--point",
        "0.0,0.0",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("mc.json")).unwrap())
            .unwrap();
    let estimates = doc["estimates"].as_array().unwrap();
    assert_eq!(estimates.len(), 2);
    let first = estimates[0].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&first));
    // The second probe starts inside the target.
    assert_eq!(estimates[1].as_f64().unwrap(), 1.0);
    assert_eq!(doc["meta"]["trials"].as_u64().unwrap(), 500);
}

#[test]
fn dp_rejects_unsupported_systems() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[system]\nname = \"quadrotor\"\n").unwrap();
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "dp",
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn reach_reuses_an_existing_sample_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let gen = run(&["--out", d, "--seed", "4", "sample", "--m", "60", "--file", "s.csv"]);
    assert_eq!(gen.status.code(), Some(0));
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[sample]\nm = 60\nfile = \"s.csv\"\n").unwrap();
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        d,
        "--seed",
        "4",
        "reach",
        "--grid",
        "5,5",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(Path::new(d).join("field-exact.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(doc["meta"]["plan"], "file");
    assert_eq!(doc["meta"]["m"].as_u64().unwrap(), 60);
}
