use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ginoe"));
    c.env_remove("GINOE_THREADS");
    c
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn validate(schema: &str, v: &Value) {
    let text = std::fs::read_to_string(root().join("schemas").join(schema)).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let msgs: Vec<String> = match compiled.validate(v) {
        Ok(()) => return,
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    panic!("{schema:?} rejects output: {msgs:?}");
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn check_manifest(dir: &Path, command: &str) -> Value {
    let m = read_json(&dir.join("manifest.json"));
    validate("manifest.schema.json", &m);
    assert_eq!(m["command"], command);
    for f in m["outputs"].as_array().unwrap() {
        assert!(dir.join(f.as_str().unwrap()).is_file(), "listed output {f} missing");
    }
    m
}

#[test]
fn clt_golden_files_are_byte_identical() {
    let square = golden("square.json");
    for threads in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&[
            "clt", "--n", "32", "--samples", "200", "--seed", "7",
            "--domain", square.to_str().unwrap(),
            "--out", dir.path().to_str().unwrap(),
            "--threads", threads,
        ]);
        validate("clt_summary.schema.json", &stdout_json(&o));
        for (produced, frozen) in [("counts.csv", "clt_n32_m200_seed7_counts.csv"), ("summary.json", "clt_n32_m200_seed7_summary.json")] {
            let a = std::fs::read(dir.path().join(produced)).unwrap();
            let b = std::fs::read(golden(frozen)).unwrap();
            assert!(a == b, "{produced} differs from the golden file with {threads} threads");
        }
        check_manifest(dir.path(), "clt");
    }
}

#[test]
fn threads_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("GINOE_THREADS", "2")
        .args(["clt", "--n", "32", "--samples", "200", "--seed", "7", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
    let a = std::fs::read(dir.path().join("counts.csv")).unwrap();
    assert_eq!(a, std::fs::read(golden("clt_n32_m200_seed7_counts.csv")).unwrap());
    let bad = bin().env("GINOE_THREADS", "many").args(["kernel", "--n", "4", "--z", "0.3,0.5", "--w", "0.3,0.5"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sample_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sample", "--n", "20", "--samples", "30", "--seed", "1", "--out", dir.path().to_str().unwrap()]);
    let v = stdout_json(&o);
    validate("ensemble_summary.schema.json", &v);
    validate("ensemble_summary.schema.json", &read_json(&dir.path().join("summary.json")));
    let eig = std::fs::read_to_string(dir.path().join("eigenvalues.csv")).unwrap();
    assert_eq!(eig.lines().count(), 1 + 20 * 30);
    assert!(eig.starts_with("sample_index,re,im\n"));
    let rec = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(rec.lines().next(), Some("sample_index,seed,n,domain_id,count"));
    check_manifest(dir.path(), "sample");
}

#[test]
fn estimate_commands_match_schema() {
    let cases: &[&[&str]] = &[
        &["variance", "--n", "256", "--method", "covariogram"],
        &["variance", "--n", "256"],
        &["intensity", "--n", "100"],
        &["rk", "--n", "64", "--m", "2", "--samples", "20000", "--seed", "4"],
        &["lin-limit", "--n", "400", "--profile", "disk", "--param", "1"],
    ];
    for args in cases {
        let v = stdout_json(&run(args));
        validate("estimate.schema.json", &v);
        assert_eq!(v["command"], args[0]);
    }
}

#[test]
fn variance_reports_prediction() {
    let v = stdout_json(&run(&["variance", "--n", "4096"]));
    let p = v["prediction"].as_f64().unwrap();
    assert!((p - 0.14366969770013327 * 64.0).abs() < 1e-9);
    assert!((v["quadrature"].as_f64().unwrap() / p - 1.0).abs() < 0.02);
}

#[test]
fn kernel_command() {
    let v = stdout_json(&run(&["kernel", "--n", "100", "--z", "0.3,0.5", "--w", "0.32,0.5", "--scaled"]));
    validate("kernel.schema.json", &v);
    // S is Hermitian.
    assert_eq!(v["S"]["re"], v["S_rev"]["re"]);
    let d = stdout_json(&run(&["kernel", "--n", "50", "--z", "2,3", "--w", "2,3"]));
    validate("kernel.schema.json", &d);
    assert_eq!(d["D"]["abs"], 0.0);
}

#[test]
fn report_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["report", "--n", "32", "--samples", "400", "--seed", "2", "--mc-samples", "16384", "--out", dir.path().to_str().unwrap()]);
    let v = stdout_json(&o);
    validate("report.schema.json", &v);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(!csv.contains('\r'));
    check_manifest(dir.path(), "report");
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["selftest", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    validate("selftest.schema.json", &v);
    assert_eq!(v["passed"], true);
}

#[test]
fn validation_errors_exit_2() {
    assert_eq!(run(&["clt", "--n", "10", "--samples", "5", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["clt", "--n", "10"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let near_axis = dir.path().join("flat.json");
    std::fs::write(&near_axis, r#"{"vertices": [[0.1, 0.01], [0.4, 0.01], [0.4, 0.3]]}"#).unwrap();
    assert_eq!(run(&["variance", "--n", "64", "--domain", near_axis.to_str().unwrap()]).status.code(), Some(2));
    let bad_cfg = dir.path().join("cfg.toml");
    std::fs::write(&bad_cfg, "delta_min = -1.0\n").unwrap();
    assert_eq!(run(&["variance", "--n", "64", "--config", bad_cfg.to_str().unwrap()]).status.code(), Some(2));
    let unknown = dir.path().join("cfg.json");
    std::fs::write(&unknown, r#"{"colour": 1}"#).unwrap();
    assert_eq!(run(&["variance", "--n", "64", "--config", unknown.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["rk", "--n", "64", "--m", "5", "--samples", "100"]).status.code(), Some(2));
}

#[test]
fn tolerance_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.json");
    std::fs::write(&cfg, r#"{"error_target": 1e-9}"#).unwrap();
    let o = run(&["rk", "--n", "64", "--samples", "1000", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_hash_ignores_key_order_and_format() {
    let dir = tempfile::tempdir().unwrap();
    let toml = dir.path().join("a.toml");
    std::fs::write(&toml, "mc_samples = 4096\ndelta_min = 0.04\n").unwrap();
    let json = dir.path().join("b.json");
    std::fs::write(&json, r#"{"delta_min": 0.04, "mc_samples": 4096}"#).unwrap();
    let hash = |cfg: &Path, out: &Path| {
        let o = run(&["rk", "--n", "16", "--samples", "100", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        check_manifest(out, "rk")["config_hash"].clone()
    };
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    assert_eq!(hash(&toml, &o1), hash(&json, &o2));
}

#[test]
fn shipped_domain_and_config_files_validate() {
    validate("domain.schema.json", &read_json(&golden("square.json")));
    let defaults = serde_json::to_value(ginoe_cli::config::Config::default()).unwrap();
    validate("config.schema.json", &defaults);
}
