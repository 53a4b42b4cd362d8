use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("splman-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn splman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splman")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &PathBuf) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    assert_eq!(code(&splman(&["validate", path(&data("valence3.json"))])), 0);
    let broken = splman(&["validate", path(&data("broken-cocycle.json"))]);
    assert_eq!(code(&broken), 1);
    assert!(stdout(&broken).contains("charts (0,1,2)"), "{}", stdout(&broken));
    let bad = tmp("malformed.json");
    std::fs::write(&bad, "{\"version\": 1,").unwrap();
    assert_eq!(code(&splman(&["validate", path(&bad)])), 2);
    assert_eq!(code(&splman(&["validate", "/nonexistent/file.json"])), 2);
}

#[test]
fn validate_json_report() {
    let out = splman(&["validate", path(&data("broken-inverse.json")), "--format", "json", "--seed", "7"]);
    assert_eq!(code(&out), 1);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["valid"], false);
    let inverse = v["checks"].as_array().unwrap().iter().find(|c| c["kind"] == "inverse").unwrap();
    assert_eq!(inverse["passed"], false);
}

#[test]
fn every_negative_fixture_is_rejected() {
    for name in ["broken-cocycle", "broken-inverse", "element-mismatch", "overlapping-vertex-charts", "two-extraordinary"] {
        assert_eq!(code(&splman(&["validate", path(&data(&format!("{name}.json")))])), 1, "{name}");
    }
    for name in ["valence5", "torus", "lshape", "square", "incompatible"] {
        assert_eq!(code(&splman(&["validate", path(&data(&format!("{name}.json")))])), 0, "{name}");
    }
}

#[test]
fn cover_writes_valid_files() {
    for (mesh, vertex, structured) in [("star3.mesh", 1, 3), ("star5.mesh", 1, 5), ("grid.mesh", 0, 5)] {
        let out = tmp(&format!("{mesh}.json"));
        let run = splman(&["cover", path(&data(mesh)), "--out", path(&out), "--format", "json"]);
        assert_eq!(code(&run), 0, "{mesh}");
        let v: serde_json::Value = serde_json::from_str(&stdout(&run)).unwrap();
        let kinds: Vec<&str> = v["charts"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
        assert_eq!(kinds.iter().filter(|k| **k == "structured").count(), structured, "{mesh}");
        assert_eq!(kinds.len() - structured, vertex, "{mesh}");
        assert_eq!(code(&splman(&["validate", path(&out)])), 0, "{mesh}");
    }
    assert_eq!(code(&splman(&["cover", path(&data("nonmanifold.mesh")), "--out", path(&tmp("nm.json"))])), 1);
}

#[test]
fn classify_reports_extraordinary_vertices() {
    let out = splman(&["classify", path(&data("valence5.json"))]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("valence 5"));
}

#[test]
fn dualcheck_verdicts() {
    let ok = splman(&["dualcheck", path(&data("valence3.json")), "--format", "json"]);
    assert_eq!(code(&ok), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&ok)).unwrap();
    assert!(v["residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(v["certified"], true);
    let bad = splman(&["dualcheck", path(&data("incompatible.json")), "--format", "json"]);
    assert_eq!(code(&bad), 1);
    let v: serde_json::Value = serde_json::from_str(&stdout(&bad)).unwrap();
    assert_eq!(v["compatible"], false);
}

#[test]
fn space_counts_functions() {
    let out = splman(&["space", path(&data("square.json")), "--format", "json"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["functions"], 36);
}

#[test]
fn project_reproduces_bilinear_fields() {
    let coeffs = tmp("coeffs.json");
    let out = splman(&["project", path(&data("lshape.json")), "--field", "monomial:1,1", "--out", path(&coeffs), "--format", "json"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["err_l2"].as_f64().unwrap() < 1e-9);
    let c: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(&coeffs).unwrap()).unwrap();
    assert_eq!(c.len(), v["functions"].as_u64().unwrap() as usize);
    assert_eq!(code(&splman(&["project", path(&data("lshape.json")), "--field", "bogus"])), 2);
}

#[test]
fn converge_writes_csv() {
    let csv = tmp("conv.csv");
    let out = splman(&["converge", "--p", "2", "--levels", "5", "--field", "sinsin", "--out", path(&csv)]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("level,h,err_l2,err_h1,rate_l2,rate_h1"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    let last: f64 = rows[4][4].parse().unwrap();
    assert!((2.8..=3.2).contains(&last), "{last}");
}

#[test]
fn converge_rejects_singular_geometry() {
    let mut file: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(data("square.json")).unwrap()).unwrap();
    file["control_points"] = serde_json::json!(vec![[0.0, 0.0, 0.0]; 36]);
    let flat = tmp("flat.json");
    std::fs::write(&flat, file.to_string()).unwrap();
    assert_eq!(code(&splman(&["converge", path(&flat), "--p", "2", "--levels", "2"])), 1);
    // wrong number of control points is an input error
    file["control_points"] = serde_json::json!(vec![[0.0, 0.0, 0.0]; 3]);
    std::fs::write(&flat, file.to_string()).unwrap();
    assert_eq!(code(&splman(&["converge", path(&flat), "--p", "2", "--levels", "2"])), 2);
}

#[test]
fn unknown_arguments_are_input_errors() {
    assert_eq!(code(&splman(&["validate"])), 2);
    assert_eq!(code(&splman(&["frobnicate"])), 2);
}
