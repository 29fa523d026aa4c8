use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const ONE_STEP: &str = r#"{"tree": {"levels": 1, "root": {"mass": 1, "children": [{"mass": "1/2"}, {"mass": "1/2"}]}},
                          "terminal": [1, -1]}"#;

const TWO_STEP: &str = r#"{"tree": {"levels": 2, "root": {"mass": 1, "children": [
        {"mass": "1/3", "children": [{"mass": "1/6"}, {"mass": "1/6"}]},
        {"mass": "2/3", "children": [{"mass": "1/3"}, {"mass": "1/6"}, {"mass": "1/6"}]}]}},
    "terminal": [3, -1, "1/2", -2, -1]}"#;

fn mhl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mhl")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn conditional_square_norm_of_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.json", ONE_STEP);
    for mode in ["rational", "float"] {
        let out = mhl(&["--mode", mode, "norm", &f, "--kind", "s", "--p", "1", "--q", "1"]);
        assert_eq!(stdout(&out).trim(), "1");
    }
    let out = mhl(&["norm", &f, "--kind", "Lpq", "--p", "2", "--q", "inf"]);
    assert_eq!(stdout(&out).trim(), "1");
}

#[test]
fn decomposition_residual_vanishes() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.json", TWO_STEP);
    for target in ["s", "Q", "D"] {
        for unit in ["one", "max-abs"] {
            let rest = mhl(&["decompose", &f, "--target", target, "--unit", unit, "--p", "0.5", "--residual"]);
            let rest_path = write(dir.path(), "rest.json", &stdout(&rest));
            let norm = mhl(&["norm", &rest_path, "--kind", "star", "--p", "1", "--q", "inf"]);
            assert_eq!(stdout(&norm).trim(), "0", "target {target}, unit {unit}");
        }
    }
    let doc: serde_json::Value = serde_json::from_str(&stdout(&mhl(&["decompose", &f, "--target", "D"]))).unwrap();
    assert!(doc.is_object());
}

#[test]
fn fractional_integral_of_order_zero_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.json", TWO_STEP);
    let image: serde_json::Value = serde_json::from_str(&stdout(&mhl(&["fracint", &f, "--alpha", "0"]))).unwrap();
    let terminal: Vec<String> =
        image["terminal"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    assert_eq!(terminal, ["3", "-1", "1/2", "-2", "-1"]);
}

#[test]
fn experiment_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "config.json",
        r#"{"batch": {"template": {"depth": 2}, "count": 3, "first_seed": 4}, "r_values": [2]}"#,
    );
    let out_dir = dir.path().join("out");
    let out = mhl(&["experiment", "--name", "jn", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    stdout(&out);
    let csv = fs::read_to_string(out_dir.join("jn.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("jn.json")).unwrap()).unwrap();
    assert_eq!(summary["name"], "jn");
    assert_eq!(summary["hard_failures"].as_array().unwrap().len(), 0);
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(dir.path(), "config.json", r#"{"bogus": 1}"#);
    let out = mhl(&["experiment", "--name", "jn", "--config", &config]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ConfigError"));
}

#[test]
fn enumeration_lists_and_caps() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.json", ONE_STEP);
    let listed = stdout(&mhl(&["enumerate-stopping-times", &f]));
    assert_eq!(listed.lines().count(), 5);
    let out = mhl(&["enumerate-stopping-times", &f, "--cap", "4"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("EnumerationCapExceeded"));
}

#[test]
fn malformed_martingale_is_reported_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "f.json",
        r#"{"tree": {"levels": 1, "root": {"mass": 1, "children": [{"mass": "1/2"}, {"mass": "1/3"}]}}, "terminal": [1, -1]}"#,
    );
    let out = mhl(&["norm", &f, "--kind", "S"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: "), "{err}");
}
