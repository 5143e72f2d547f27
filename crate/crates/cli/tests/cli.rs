use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use eraser_core::counts::derive_seed;
use serde_json::Value;
use tempfile::TempDir;

fn eraser(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eraser"))
        .args(args)
        .env_remove("ERASER_OUT_DIR")
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = eraser(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("scenario.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const EQUAL_WEIGHTS: &str = "[source]\na = 1.0\nb = 1.0\n";

#[test]
fn pattern_equal_weights_has_no_port1_fringes() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), EQUAL_WEIGHTS);
    ok(d.path(), &["--config", &cfg, "--out", "out", "pattern"]);
    let side = json(&d.path().join("out/pattern/port1_ideal.json"));
    assert!(side["visibility"].as_f64().unwrap().abs() < 1e-12);
    let rule = json(&d.path().join("out/pattern/sum_rule.json"));
    assert!(rule["max_residual"].as_f64().unwrap() < 1e-10);
    let csv = fs::read_to_string(d.path().join("out/pattern/port1_ideal.csv")).unwrap();
    assert!(csv.starts_with("x_m,intensity\n"));
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 202);
}

#[test]
fn pattern_default_source_at_45_degrees() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "[interferometer]\ngamma1_degrees = 45\n");
    ok(d.path(), &["--config", &cfg, "--out", "out", "pattern", "--port", "1"]);
    let ideal = json(&d.path().join("out/pattern/port1_ideal.json"));
    assert!((ideal["visibility"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let corrected = json(&d.path().join("out/pattern/port1_corrected.json"));
    assert!((corrected["visibility"].as_f64().unwrap() - 0.9).abs() < 1e-12);
    assert!(!d.path().join("out/pattern/port2_ideal.json").exists());
}

#[test]
fn port2_at_45_and_20_degrees() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "[interferometer]\ngamma1_degrees = 45\ngamma2_degrees = 20\n");
    ok(d.path(), &["--config", &cfg, "--out", "out", "pattern", "--port", "2", "--ideal"]);
    let ideal = json(&d.path().join("out/pattern/port2_ideal.json"));
    assert!((ideal["visibility"].as_f64().unwrap() - 0.868).abs() < 1e-3);
    assert!(!d.path().join("out/pattern/port2_corrected.json").exists());
}

#[test]
fn scan_equal_weights() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), EQUAL_WEIGHTS);
    ok(d.path(), &["--config", &cfg, "--out", "out", "scan", "--gamma1", "0,15,30,45"]);
    let csv = fs::read_to_string(d.path().join("out/scan/scan.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("gamma1_deg,n1,v1_ideal,v1_corrected,n2,v2_ideal,v2_corrected"));
    let expect = [0.0, 1.0 / 7.0, 0.6, 1.0];
    for (line, e) in lines.zip(expect) {
        let v: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!((v - e).abs() < 1e-12, "{line}");
    }
}

#[test]
fn scan_minimum_and_rising_branch() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "[interferometer]\ngamma2_degrees = 20\n");
    ok(d.path(), &["--config", &cfg, "--out", "out", "--format", "json", "scan", "--range", "30:45:0.01"]);
    assert!(!d.path().join("out/scan/scan.csv").exists());
    let rows = json(&d.path().join("out/scan/scan.json"));
    let rows = rows.as_array().unwrap();
    let v1 = |r: &Value| r["v1_ideal"].as_f64().unwrap();
    let min = rows.iter().min_by(|a, b| v1(a).total_cmp(&v1(b))).unwrap();
    assert!((min["gamma1_degrees"].as_f64().unwrap() - 35.78).abs() <= 0.01);
    let at41 = rows
        .iter()
        .find(|r| (r["gamma1_degrees"].as_f64().unwrap() - 41.0).abs() < 1e-9)
        .unwrap();
    assert!((v1(at41) - 0.68).abs() < 0.02, "{}", v1(at41));
}

#[test]
fn discriminate_reports_angle() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "[interferometer]\ngamma2_degrees = 20\n");
    let stdout = ok(d.path(), &["--config", &cfg, "--out", "out", "discriminate"]);
    assert!(stdout.contains("gamma1* = 35.77"), "{stdout}");
    let r = json(&d.path().join("out/discriminate/discriminate.json"));
    assert!((r["gamma1_degrees"].as_f64().unwrap() - 35.78).abs() <= 0.01);
    assert!(r["port1_visibility"].as_f64().unwrap() < 1e-12);
}

#[test]
fn discriminate_equal_weights_is_already_orthogonal() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "[source]\na = 1.0\nb = 1.0\n[interferometer]\ngamma2_degrees = 20\n");
    let stdout = ok(d.path(), &["--config", &cfg, "--out", "out", "discriminate"]);
    assert!(stdout.contains("already orthogonal"));
    assert!(stdout.contains("gamma1* = 20.0000"));
}

#[test]
fn discriminate_product_state_fails_with_numerical_code() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "[source]\na = 1.0\nb = 0.0\n");
    let out = eraser(d.path(), &["--config", &cfg, "--out", "out", "discriminate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nothing to discriminate"));
}

#[test]
fn bad_configs_exit_with_code_2() {
    let d = TempDir::new().unwrap();
    for body in [
        "[source]\nbogus = 1\n",
        "[geometry]\nhalf_width = \"40 furlongs\"\n",
        "[geometry]\nseparation = \"50 um\"\n",
        "[counting]\nintegration_time = -1\n",
    ] {
        let cfg = write_config(d.path(), body);
        let out = eraser(d.path(), &["--config", &cfg, "pattern"]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("scenario.toml"), "{err}");
    }
    let out = eraser(d.path(), &["--config", "missing.toml", "pattern"]);
    assert_eq!(out.status.code(), Some(2));
    let out = eraser(d.path(), &["scan", "--range", "10:0:1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_key_diagnostic_names_the_field() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "[source]\na = 0.92\nbogus = 1\n");
    let out = eraser(d.path(), &["--config", &cfg, "pattern"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus") && err.contains("line 3"), "{err}");
}

#[test]
fn monte_carlo_is_seed_deterministic() {
    let d = TempDir::new().unwrap();
    let read = |dir: &str| fs::read_to_string(d.path().join(dir).join("pattern/port1_counts.csv")).unwrap();
    ok(d.path(), &["--out", "a", "--seed", "7", "--montecarlo", "pattern"]);
    ok(d.path(), &["--out", "b", "--seed", "7", "--montecarlo", "pattern"]);
    ok(d.path(), &["--out", "c", "--seed", "8", "--montecarlo", "pattern"]);
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    assert!(read("a").starts_with("x_m,singles_s,singles_i,coincidences\n"));
    let side = json(&d.path().join("a/pattern/port1_counts.json"));
    assert_eq!(side["metadata"]["rng_seed"].as_u64(), Some(derive_seed(7, 1)));
    assert!(side["fit"]["visibility"].as_f64().is_some());
}

#[test]
fn output_directory_from_environment() {
    let d = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_eraser"))
        .args(["discriminate"])
        .env("ERASER_OUT_DIR", d.path().join("env_out"))
        .current_dir(d.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.path().join("env_out/discriminate/discriminate.json").exists());
}

#[test]
fn erase_sum_rule() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "[interferometer]\ngamma1_degrees = 35\ngamma2_degrees = 20\n");
    ok(d.path(), &["--config", &cfg, "--out", "out", "erase"]);
    let run = json(&d.path().join("out/erase/erase.json"));
    assert!(run["sum_residual"].as_f64().unwrap() < 1e-10);
    assert!(d.path().join("out/erase/fringe_ideal.csv").exists());
    assert!(d.path().join("out/erase/antifringe_ideal.csv").exists());
}

#[test]
fn conserve_ideal_rows() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "[interferometer]\ngamma2_degrees = 20\n");
    ok(d.path(), &["--config", &cfg, "--out", "out", "--ideal", "conserve"]);
    let r = json(&d.path().join("out/conserve/conserve_ideal.json"));
    for row in r["rows"].as_array().unwrap() {
        assert!((row["alpha"].as_f64().unwrap() - 0.7085).abs() < 1e-3);
    }
    assert!(!d.path().join("out/conserve/conserve_corrected.json").exists());
}

#[test]
fn reproduce_figure_marks_assumptions() {
    let d = TempDir::new().unwrap();
    ok(d.path(), &["--out", "out", "reproduce", "fig5"]);
    let meta = json(&d.path().join("out/fig5/metadata.json"));
    let assumed = meta["assumed"].as_array().unwrap();
    assert!(!assumed.is_empty());
    assert!(assumed.iter().all(|a| a.as_str().unwrap().contains("[assumed")));
    let expect = [0.7085, 0.852, 0.868];
    for (label, e) in ["a", "b", "c"].iter().zip(expect) {
        let side = json(&d.path().join(format!("out/fig5/panel_{label}_ideal.json")));
        assert!((side["visibility"].as_f64().unwrap() - e).abs() < 1e-3);
        assert!(d.path().join(format!("out/fig5/panel_{label}_counts.csv")).exists());
    }
}

#[test]
fn reproduce_table_with_few_repetitions() {
    let d = TempDir::new().unwrap();
    let stdout = ok(d.path(), &["--out", "out", "reproduce", "table1", "--repetitions", "3"]);
    assert!(stdout.contains("expected"));
    let t = json(&d.path().join("out/table1/table1.json"));
    for row in t["rows"].as_array().unwrap() {
        assert!((row["expected"].as_f64().unwrap() - 0.7085).abs() < 1e-3);
    }
    assert!(d.path().join("out/table1/table1.txt").exists());
}

#[test]
fn config_round_trip() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(
        d.path(),
        "[source]\na = [0.6, 0.1]\nb = 0.5\n[geometry]\nhalf_width = \"35 um\"\nwavenumber = 1.8e7\n",
    );
    let first = ok(d.path(), &["--config", &cfg, "config"]);
    let again = write_config(d.path(), &first);
    let second = ok(d.path(), &["--config", &again, "config"]);
    assert_eq!(first, second);
}

#[test]
fn unknown_target_is_rejected() {
    let d = TempDir::new().unwrap();
    let out = eraser(d.path(), &["reproduce", "fig9"]);
    assert_eq!(out.status.code(), Some(2));
}
