use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn henren(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_henren")).current_dir(dir).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn schema(name: &str) -> jsonschema::Validator {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(format!("{name}.schema.json"));
    jsonschema::validator_for(&read_json(&p)).expect("schema compiles")
}

fn assert_valid(name: &str, v: &Value) {
    let s = schema(name);
    let errs: Vec<String> = s.iter_errors(v).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errs.is_empty(), "{name}: {errs:#?}");
}

const HENON: &str = r#"{"variant":"henon","a":-1.560097195348786,"b":0.1}"#;
const SINK: &str = r#"{"variant":"henon","a":0.1,"b":0.2}"#;
const QUAD: &str = r#"{"variant":"quadratic_1d_embedding","a":-1.9}"#;
const DOUBLING3: &str = r#"[{"R":2,"ranks":[0,1]},{"R":2,"ranks":[0,1]},{"R":2,"ranks":[0,1]}]"#;

#[test]
fn kneading_reports_flags() {
    let d = TempDir::new().unwrap();
    write(d.path(), "q.json", QUAD);
    let o = henren(d.path(), &["--no-meta", "kneading", "--map", "q.json", "--out", "k.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&d.path().join("k.json"));
    assert_valid("kneading", &v);
    assert_eq!(v["command"], "kneading");
    assert!(v.get("meta").is_none());
    let cv = v["result"]["critical_value"].as_f64().unwrap();
    assert!((cv + 1.9).abs() < 1e-12);
}

#[test]
fn sink_is_not_renormalizable() {
    let d = TempDir::new().unwrap();
    write(d.path(), "s.json", SINK);
    let o = henren(d.path(), &["renormalize", "--map", "s.json", "--depth", "1", "--no-certify"]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).expect("error is JSON");
    assert_eq!(err["status"], "error");
    assert!(err["reason"].as_str().unwrap().contains("not renormalizable"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    let d = TempDir::new().unwrap();
    write(d.path(), "h.json", HENON);
    for args in [
        &["frobnicate"][..],
        &["renormalize", "--map", "h.json", "--lambda", "2"],
        &["renormalize", "--map", "h.json", "--precision", "quad"],
        &["renormalize", "--map", "missing.json"],
        &["search", "--params", "-1.5"],
    ] {
        let o = henren(d.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    let o = henren(d.path(), &["renormalize", "--map", "h.json", "--lambda", "2"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--lambda"));
}

#[test]
fn no_meta_output_is_byte_identical() {
    let d = TempDir::new().unwrap();
    write(d.path(), "h.json", HENON);
    let run = || {
        let o = henren(d.path(), &["--no-meta", "--workers", "2", "converge", "--map", "h.json", "--depth", "3"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let first = run();
    assert!(first == run(), "converge output differs between runs");
}

#[test]
fn flags_override_config_and_unknown_keys_fail() {
    let d = TempDir::new().unwrap();
    write(d.path(), "h.json", HENON);
    write(d.path(), "cfg.json", r#"{"command":"renormalize","map":"h.json","depth":3,"certify":false}"#);
    let o = henren(d.path(), &["--no-meta", "--config", "cfg.json", "renormalize", "--depth", "1", "--out", "r.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&d.path().join("r.json"));
    assert_valid("config", &v["config"]);
    assert_eq!(v["config"]["depth"], 1);
    assert_eq!(v["result"]["depth"], 1);

    write(d.path(), "bad.json", r#"{"map":"h.json","depht":3}"#);
    let o = henren(d.path(), &["--config", "bad.json", "renormalize"]);
    assert_eq!(o.status.code(), Some(2));

    write(d.path(), "other.json", r#"{"command":"lyapunov"}"#);
    let o = henren(d.path(), &["--config", "other.json", "renormalize", "--map", "h.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn outputs_match_schemas() {
    let d = TempDir::new().unwrap();
    write(d.path(), "h.json", HENON);
    let cases: [(&str, &[&str]); 4] = [
        ("renormalize", &["renormalize", "--map", "h.json", "--depth", "2", "--csv", "r.csv"]),
        ("certify", &["certify", "--map", "h.json", "--depth", "1", "--grid", "8"]),
        ("converge", &["converge", "--map", "h.json", "--depth", "3", "--probe-t", "0.1", "--probe-samples", "8"]),
        ("lyapunov", &["lyapunov", "--map", "h.json", "--horizon", "2000", "--seeds", "4", "--seed", "7"]),
    ];
    for (name, args) in cases {
        let out = format!("{name}.json");
        let mut full = args.to_vec();
        full.extend(["--out", &out]);
        let o = henren(d.path(), &full);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let v = read_json(&d.path().join(&out));
        assert_valid(name, &v);
        assert!(v["meta"]["version"].is_string());
    }
    let csv = std::fs::read_to_string(d.path().join("r.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "depth,R,ratio,sigma,tau,thinness,curvature,jac_min,jac_max,henon_like_residual,L_min,pass,ranks"
    );
    assert_eq!(lines.count(), 2);
    let v = read_json(&d.path().join("lyapunov.json"));
    let lam = v["result"]["estimate"]["lambda_mu"].as_f64().unwrap();
    assert!(lam.is_finite());
}

#[test]
fn search_realizes_doubling_word() {
    let d = TempDir::new().unwrap();
    write(d.path(), "w.json", DOUBLING3);
    let o = henren(
        d.path(),
        &[
            "--no-meta", "search", "--family", "henon", "--jacobian", "0.2", "--word", "w.json", "--depth", "3",
            "--no-certify", "--out", "s.json", "--csv", "s.csv",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&d.path().join("s.json"));
    assert_valid("search", &v);
    let res = &v["result"];
    assert_eq!(res["achieved"], res["target"]);
    let iv: Vec<[f64; 2]> = serde_json::from_value(res["intervals"].clone()).unwrap();
    assert_eq!(iv.len(), 3);
    for w in iv.windows(2) {
        assert!(w[0][0] <= w[1][0] && w[1][1] <= w[0][1] && w[1][1] - w[1][0] < w[0][1] - w[0][0]);
    }
    let csv = std::fs::read_to_string(d.path().join("s.csv")).unwrap();
    assert!(csv.starts_with("depth,lo,hi,width,steps,R,ranks"));
}
