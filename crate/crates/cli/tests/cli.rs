use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SCHEMA: &str = r#"{
  "missing": ["", "?"],
  "columns": [
    { "name": "x", "kind": "numeric", "domain": [0, 99] },
    { "name": "y", "kind": "numeric" },
    { "name": "c", "kind": "categorical" },
    { "name": "label", "kind": "categorical", "role": "label" },
    { "name": "pred", "kind": "categorical", "role": "ignored" }
  ]
}"#;

/// Label and prediction are both `x >= 50`; y and c carry no signal.
fn toy_csv(n: usize) -> String {
    let mut s = String::from("x,y,c,label,pred\n");
    for i in 0..n {
        let x = (i * 7) % 100;
        let y = (i * 37) % 50;
        let c = ["a", "b", "c"][i % 3];
        let l = if x >= 50 { "yes" } else { "no" };
        s.push_str(&format!("{x},{y},{c},{l},{l}\n"));
    }
    s
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("data.csv"), toy_csv(400)).unwrap();
        std::fs::write(dir.path().join("schema.json"), SCHEMA).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn minimize(&self, oracle: &str, out: &str, extra: &[&str]) -> Output {
        let data = self.path("data.csv");
        let schema = self.path("schema.json");
        let out = self.path(out);
        let mut args = vec![
            "minimize",
            "--data",
            data.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--oracle",
            oracle,
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        dmin(&args)
    }
}

fn dmin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmin")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn minimize_writes_all_artifacts() {
    let fx = Fixture::new();
    let summary = ok(&fx.minimize("builtin", "out", &[]));
    assert!(summary.contains("Target relative accuracy: 0.98"));
    for f in ["result.json", "trace.csv", "summary.txt", "clean_report.json", "model.json"] {
        assert!(fx.path("out").join(f).exists(), "{f} missing");
    }
    let doc = read_json(&fx.path("out/result.json"));
    assert_eq!(doc["format_version"], 1);
    assert_eq!(doc["generalization"]["features"]["y"]["status"], "suppressed");
    assert_eq!(doc["generalization"]["features"]["c"]["status"], "suppressed");
    assert!(doc["accuracy"]["validation"]["relative_accuracy"].as_f64().unwrap() >= 0.98);
    let trace = std::fs::read_to_string(fx.path("out/trace.csv")).unwrap();
    assert!(trace.starts_with("step,action,feature,ncp,relative_accuracy,clusters\n0,fit,"));
}

#[test]
fn minimize_is_byte_deterministic() {
    let fx = Fixture::new();
    ok(&fx.minimize("builtin", "a", &["--seed", "7"]));
    ok(&fx.minimize("builtin", "b", &["--seed", "7"]));
    for f in ["result.json", "trace.csv", "summary.txt", "model.json"] {
        let a = std::fs::read(fx.path("a").join(f)).unwrap();
        let b = std::fs::read(fx.path("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn configuration_errors_exit_2_with_json() {
    let fx = Fixture::new();
    let data = fx.path("data.csv");
    let out = dmin(&[
        "minimize",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        fx.path("absent.json").to_str().unwrap(),
        "--oracle",
        "builtin",
        "--out",
        fx.path("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config_error");

    let out = fx.minimize("builtin", "o", &["--target-accuracy", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fx.minimize("builtin", "o", &["--splits", "0.5,0.5,0.5,0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_data_exits_3() {
    let fx = Fixture::new();
    std::fs::write(fx.path("data.csv"), "x,y,c,label,pred\n1,2,a,yes,yes\nabc,2,a,no,no\n").unwrap();
    let out = fx.minimize("builtin", "o", &[]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "parse_error");
}

#[test]
fn apply_generalizes_and_is_idempotent() {
    let fx = Fixture::new();
    ok(&fx.minimize("builtin", "out", &[]));
    let doc = fx.path("out/result.json");
    let once = fx.path("once.csv");
    let twice = fx.path("twice.csv");
    ok(&dmin(&[
        "apply",
        "--doc",
        doc.to_str().unwrap(),
        "--data",
        fx.path("data.csv").to_str().unwrap(),
        "--out",
        once.to_str().unwrap(),
    ]));
    let text = std::fs::read_to_string(&once).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,c,label"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 400);
    // y and c are suppressed, so each takes one value per cluster.
    let clusters = read_json(&doc)["clusters"].as_array().unwrap().len();
    let distinct: std::collections::BTreeSet<(&str, &str)> = rows
        .iter()
        .map(|r| {
            let f: Vec<&str> = r.split(',').collect();
            (f[1], f[2])
        })
        .collect();
    assert!(distinct.len() <= clusters);

    ok(&dmin(&[
        "apply",
        "--doc",
        doc.to_str().unwrap(),
        "--data",
        once.to_str().unwrap(),
        "--out",
        twice.to_str().unwrap(),
    ]));
    assert_eq!(std::fs::read(&once).unwrap(), std::fs::read(&twice).unwrap());
}

#[test]
fn evaluate_with_saved_model_and_precomputed_column() {
    let fx = Fixture::new();
    ok(&fx.minimize("builtin", "out", &[]));
    let doc = fx.path("out/result.json");
    let model = format!("model:{}", fx.path("out/model.json").display());
    for oracle in [model.as_str(), "precomputed:pred"] {
        let out = ok(&dmin(&[
            "evaluate",
            "--doc",
            doc.to_str().unwrap(),
            "--data",
            fx.path("data.csv").to_str().unwrap(),
            "--oracle",
            oracle,
        ]));
        let report: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(report["accuracy"]["total"], 400, "{oracle}");
        assert!(report["accuracy"]["relative_accuracy"].as_f64().unwrap() >= 0.95, "{oracle}");
        assert_eq!(report["ncp"]["per_feature"]["y"], 1.0);
    }
    let out = dmin(&[
        "evaluate",
        "--doc",
        doc.to_str().unwrap(),
        "--data",
        fx.path("data.csv").to_str().unwrap(),
        "--oracle",
        "builtin",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn risk_of_a_small_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    std::fs::write(&path, "zip,sex\nA,m\nA,m\nB,f\nC,f\n").unwrap();
    let out = ok(&dmin(&["risk", "--data", path.to_str().unwrap(), "--qi", "zip"]));
    let report: Value = serde_json::from_str(&out).unwrap();
    assert!((report["risk"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert_eq!(report["distinct"], 3);
    let out = ok(&dmin(&["risk", "--data", path.to_str().unwrap(), "--qi", "sex"]));
    let report: Value = serde_json::from_str(&out).unwrap();
    assert!((report["risk"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let out = dmin(&["risk", "--data", path.to_str().unwrap(), "--qi", "zip,age"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn precomputed_oracle_run() {
    let fx = Fixture::new();
    ok(&fx.minimize("precomputed:pred", "out", &["--target-accuracy", "0.9"]));
    let doc = read_json(&fx.path("out/result.json"));
    assert_eq!(doc["config"]["oracle"], "precomputed:pred");
    assert!(doc["config"]["forest"].is_null());
    assert!(!fx.path("out/model.json").exists());
}

#[test]
fn subprocess_oracle_run() {
    if Command::new("python3").arg("--version").output().is_err() {
        eprintln!("python3 not found; skipping");
        return;
    }
    let fx = Fixture::new();
    let script = fx.path("model.py");
    std::fs::write(
        &script,
        "import sys, json\n\
         for line in sys.stdin:\n\
         \x20   r = json.loads(line)\n\
         \x20   print('yes' if r['x'] >= 50 else 'no', flush=True)\n",
    )
    .unwrap();
    let spec = format!("subprocess:python3 {}", script.display());
    ok(&fx.minimize(&spec, "out", &["--target-accuracy", "1.0"]));
    let doc = read_json(&fx.path("out/result.json"));
    assert_eq!(doc["accuracy"]["optimization"]["relative_accuracy"], 1.0);
    assert_eq!(doc["generalization"]["features"]["y"]["status"], "suppressed");

    let out = fx.minimize("subprocess:/nonexistent/model", "bad", &[]);
    assert_eq!(out.status.code(), Some(4));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "oracle_unavailable");
}

/// Minimal HTTP/1.1 endpoint: reads one JSON request per connection and
/// answers `x >= 50` per record.
fn spawn_http_model() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; len];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let records: Vec<Value> = serde_json::from_slice(&body).unwrap();
            let labels: Vec<&str> = records
                .iter()
                .map(|r| if r["x"].as_f64().unwrap() >= 50.0 { "yes" } else { "no" })
                .collect();
            let reply = serde_json::to_string(&labels).unwrap();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                reply.len(),
                reply
            );
        }
    });
    format!("http://{addr}/predict")
}

#[test]
fn http_oracle_run() {
    let fx = Fixture::new();
    let url = spawn_http_model();
    ok(&fx.minimize(&url, "out", &["--target-accuracy", "1.0"]));
    let doc = read_json(&fx.path("out/result.json"));
    assert_eq!(doc["accuracy"]["optimization"]["relative_accuracy"], 1.0);
    assert_eq!(doc["config"]["oracle"], url.as_str());

    let out = fx.minimize("http://127.0.0.1:9/none", "bad", &[]);
    assert_eq!(out.status.code(), Some(4));
}
