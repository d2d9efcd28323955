use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(args: &[&str], config: &Path, out: &Path) -> (i32, String) {
    let output = Command::new(env!("CARGO_BIN_EXE_julia-thermo"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    (output.status.code().unwrap_or(-1), String::from_utf8_lossy(&output.stderr).into())
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const ORIGIN: &str = r#"
eta = 0.34657359027997264
levels = [6, 7, 8, 9, 10, 11, 12]

[family]
kind = "quadratic"
parameter = [0.0, 0.0]
"#;

#[test]
fn bowen_at_origin_is_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", ORIGIN);
    let (code, err) = run(&["bowen"], &cfg, dir.path());
    assert_eq!(code, 0, "{err}");
    let doc = read_json(&dir.path().join("bowen.json"));
    for key in ["config", "result", "diagnostics", "version"] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    let delta = doc["result"]["delta"].as_f64().unwrap();
    assert!((delta - 0.5).abs() < 1e-8, "{delta}");
}

#[test]
fn json_result_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", ORIGIN);
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    assert_eq!(run(&["pressure"], &cfg, &first).0, 0);
    let (code, err) = run(&["pressure"], &first.join("pressure.json"), &second);
    assert_eq!(code, 0, "{err}");
    let a = read_json(&first.join("pressure.json"));
    let b = read_json(&second.join("pressure.json"));
    assert_eq!(a["config"], b["config"]);
    assert_eq!(
        serde_json::to_string(&a["result"]).unwrap(),
        serde_json::to_string(&b["result"]).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "eta = 0.3\nlevels = [8, 9, 10]\n[potential]\ntheta = 0.7\n[family]\nkind = \"quadratic\"\nparameter = [-0.1, 0.05]\n",
    );
    let one = dir.path().join("one");
    let many = dir.path().join("many");
    assert_eq!(run(&["pressure", "--threads", "1"], &cfg, &one).0, 0);
    assert_eq!(run(&["pressure", "--threads", "4"], &cfg, &many).0, 0);
    assert_eq!(
        read_json(&one.join("pressure.json"))["result"],
        read_json(&many.join("pressure.json"))["result"]
    );
}

#[test]
fn classify_origin_is_hyperbolic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", ORIGIN);
    assert_eq!(run(&["classify"], &cfg, dir.path()).0, 0);
    let doc = read_json(&dir.path().join("classify.json"));
    assert_eq!(doc["result"]["hyperbolic"], Value::Bool(true));
}

#[test]
fn bowen_field_writes_csv_with_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "field.toml",
        r#"
eta = 0.3
levels = [6, 7, 8, 9]

[family]
kind = "quadratic"

[grid]
lower = [0.15, -0.1]
upper = [0.35, 0.1]
resolution = [3, 3]
"#,
    );
    let (code, err) = run(&["bowen-field"], &cfg, dir.path());
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(dir.path().join("bowen-field.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "index_0,index_1,param_re,param_im,value,status");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().any(|r| r.ends_with(",ok")));
    assert!(rows.iter().any(|r| r.ends_with(",not_hyperbolic")));
    let sidecar = read_json(&dir.path().join("bowen-field.json"));
    assert_eq!(sidecar["diagnostics"]["status"], "ok");
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "eta = 1.0\n[family]\nkind = \"quadratic\"\nparameter = [0.0, 0.0]\n");
    let (code, err) = run(&["bowen"], &cfg, dir.path());
    assert_eq!(code, 2);
    assert!(err.contains("eta"));
    let missing = write(dir.path(), "nopath.toml", ORIGIN);
    assert_eq!(run(&["path-length"], &missing, dir.path()).0, 2);
    let no_eta = write(dir.path(), "noeta.toml", "[family]\nkind = \"quadratic\"\nparameter = [0.0, 0.0]\n");
    assert_eq!(run(&["bowen"], &no_eta, dir.path()).0, 2);
}

#[test]
fn failed_computation_exits_with_one_and_flags_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cross.toml",
        r#"
eta = 0.3
levels = [6]

[family]
kind = "quadratic"

[path]
nodes = [[0.0, 0.0], [0.4, 0.0]]
"#,
    );
    let (code, _) = run(&["path-length"], &cfg, dir.path());
    assert_eq!(code, 1);
    let doc = read_json(&dir.path().join("path-length.json"));
    assert_eq!(doc["diagnostics"]["status"], "error");
    assert!(doc["result"].is_null());
}

#[test]
fn partial_tolerance_block_keeps_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "eta = 0.3\nlevels = [6, 7, 8]\n[family]\nkind = \"quadratic\"\nparameter = [0.0, 0.0]\n[tolerances]\nsolver = 1e-11\n",
    );
    let (code, err) = run(&["bowen"], &cfg, dir.path());
    assert_eq!(code, 0, "{err}");
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bowen.json")).unwrap()).unwrap();
    assert_eq!(doc["config"]["tolerances"]["newton"], serde_json::json!(1e-10));
}
