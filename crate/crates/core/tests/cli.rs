mod common;

use common::networks_dir;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fbnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbnet"))
        .args(args)
        .env_remove("FBNET_SEED")
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    networks_dir().join(name).display().to_string()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path: PathBuf = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn chain_config(eps: &[f64], m: u32) -> String {
    let n = eps.len() + 1;
    let nodes: Vec<String> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                format!(r#"{{"id": {i}, "buffer": "unbounded"}}"#)
            } else {
                format!(r#"{{"id": {i}, "buffer": {m}}}"#)
            }
        })
        .collect();
    let edges: Vec<String> = eps
        .iter()
        .enumerate()
        .map(|(i, e)| format!(r#"{{"from": {i}, "to": {}, "erasure": {e}}}"#, i + 1))
        .collect();
    format!(
        r#"{{"nodes": [{}], "edges": [{}], "source": 0, "destination": {}}}"#,
        nodes.join(", "),
        edges.join(", "),
        n - 1
    )
}

#[test]
fn analyze_single_edge() {
    let out = fbnet(&["analyze", &config("single_edge.json")]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["mode"], "analyze");
    assert!((r["throughput"]["analytic"].as_f64().unwrap() - 0.7).abs() < 1e-15);
    assert_eq!(r["convergence"]["converged"], true);
}

#[test]
fn analyze_two_hop_fixed_point() {
    let r = json(&fbnet(&["analyze", &config("two_hop.json")]));
    let theta: Vec<f64> = serde_json::from_value(r["nodes"][1]["analytic_theta"].clone()).unwrap();
    for (got, want) in theta.iter().zip([0.2, 0.4, 0.4]) {
        assert!((got - want).abs() < 1e-9);
    }
    assert!((r["throughput"]["analytic"].as_f64().unwrap() - 0.4).abs() < 1e-9);
    assert!((r["delay"]["analytic"].as_f64().unwrap() - 5.5).abs() < 1e-9);
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", "{\"nodes\": [");
    let out = fbnet(&["analyze", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse"));
    assert!(out.stdout.is_empty());

    let cyclic = write_config(
        dir.path(),
        "cycle.json",
        r#"{"nodes": [{"id": 0, "buffer": "unbounded"}, {"id": 1, "buffer": 1}, {"id": 2, "buffer": 1}, {"id": 3, "buffer": "unbounded"}],
            "edges": [{"from": 0, "to": 1, "erasure": 0.1}, {"from": 1, "to": 2, "erasure": 0.1},
                      {"from": 2, "to": 1, "erasure": 0.1}, {"from": 2, "to": 3, "erasure": 0.1}],
            "source": 0, "destination": 3}"#,
    );
    assert_eq!(fbnet(&["analyze", &cyclic]).status.code(), Some(1));
    assert_eq!(fbnet(&["analyze", "/nonexistent/net.json"]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(fbnet(&["analyze"]).status.code(), Some(1));
    assert_eq!(fbnet(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fbnet(&["analyze", &config("two_hop.json"), "--damping", "0"]).status.code(), Some(1));
    assert_eq!(
        fbnet(&["compare", &config("two_hop.json"), "--sweep-buffers", "4..2"]).status.code(),
        Some(1)
    );
    assert_eq!(fbnet(&["--help"]).status.code(), Some(0));
}

#[test]
fn iteration_limit_reports_non_convergence() {
    let out = fbnet(&["analyze", &config("two_hop.json"), "--iters", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let r = json(&out);
    assert_eq!(r["convergence"]["converged"], false);
    assert_eq!(r["convergence"]["iterations"], 1);
}

#[test]
fn simulate_coin_flip_link() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "coin.json", &chain_config(&[0.5], 1));
    let out = fbnet(&["simulate", &path, "--epochs", "1000000", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let thr = json(&out)["throughput"]["empirical"].as_f64().unwrap();
    assert!((thr - 0.5).abs() < 0.002, "{thr}");
}

#[test]
fn replications_fill_standard_errors() {
    let out = fbnet(&["simulate", &config("two_hop.json"), "--epochs", "50000", "--replications", "4"]);
    let r = json(&out);
    assert!(r["throughput"]["empirical_se"].as_f64().unwrap() > 0.0);
    assert!(r["delay"]["empirical_se"].as_f64().unwrap() > 0.0);
    assert_eq!(r["simulation"]["replications"], 4);
}

#[test]
fn seed_falls_back_to_environment() {
    let run = |env: Option<&str>, args: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_fbnet"));
        cmd.args(["simulate", &config("two_hop.json"), "--epochs", "20000"]).args(args);
        match env {
            Some(s) => cmd.env("FBNET_SEED", s),
            None => cmd.env_remove("FBNET_SEED"),
        };
        cmd.output().unwrap().stdout
    };
    assert_eq!(run(Some("42"), &[]), run(None, &["--seed", "42"]));
    assert_ne!(run(Some("42"), &[]), run(None, &[]));
    assert_eq!(run(Some("42"), &["--seed", "3"]), run(None, &["--seed", "3"]));
}

#[test]
fn compare_passes_on_two_hop() {
    let out = fbnet(&["compare", &config("two_hop.json")]);
    assert_eq!(out.status.code(), Some(0));
    let c = &json(&out)["comparison"];
    assert_eq!(c["passed"], true);
    assert!(c["max_tv"].as_f64().unwrap() <= 0.05);
}

#[test]
fn compare_dead_network_passes() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "dead.json", &chain_config(&[1.0, 1.0], 2));
    let out = fbnet(&["compare", &path, "--epochs", "20000", "--warmup", "100"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["throughput"]["analytic"], 0.0);
    assert_eq!(r["throughput"]["empirical"], 0.0);
    assert_eq!(r["delay"]["analytic_status"], "unreachable");
    assert_eq!(r["nodes"][1]["empirical_theta"][0], 1.0);
}

#[test]
fn compare_threshold_failure_exits_three() {
    let out = fbnet(&["compare", &config("two_hop.json"), "--epochs", "20000", "--max-tv", "0", "--max-thr-err", "0"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["comparison"]["passed"], false);
}

#[test]
fn buffer_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = fbnet(&[
        "compare",
        &config("two_hop.json"),
        "--epochs",
        "50000",
        "--sweep-buffers",
        "1..3",
        "--emit-plot-data",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--max-tv",
        "1",
        "--max-thr-err",
        "1",
        "--max-delay-err",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows = json(&out)["sweep"].as_array().unwrap().clone();
    assert_eq!(rows.iter().map(|r| r["buffer"].as_u64().unwrap()).collect::<Vec<_>>(), vec![1, 2, 3]);
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("buffer,method,throughput,mean_delay"));
    assert_eq!(csv.lines().count(), 7);
    assert!(out_dir.join("occupancy_tidy.csv").exists());
}

#[test]
fn occupancy_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = fbnet(&["analyze", &config("two_hop.json"), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("occupancy.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "node,state,prob_analytic,prob_empirical");
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1], "1,0,0.2,");
    let sig = |s: &str| s.chars().filter(|c| c.is_ascii_digit()).collect::<String>().trim_start_matches('0').len();
    let r = json(&fbnet(&["analyze", &config("eight_node.json"), "--out-dir", dir.path().to_str().unwrap()]));
    assert!(r["nodes"].is_array());
    let csv = std::fs::read_to_string(dir.path().join("occupancy.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let p = line.split(',').nth(2).unwrap();
        assert!(sig(p) <= 12, "{p}");
    }
}

#[test]
fn oracle_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let lossless = write_config(dir.path(), "lossless.json", &chain_config(&[0.0, 0.0], 1));
    let out = fbnet(&["oracle", &lossless, "--epochs", "20000"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["oracle"]["throughput"], 1.0);
    assert_eq!(r["mode"], "oracle");

    let r = json(&fbnet(&["oracle", &config("two_hop.json"), "--epochs", "100000"]));
    let exact = r["throughput"]["exact"].as_f64().unwrap();
    let analytic = r["throughput"]["analytic"].as_f64().unwrap();
    assert!((analytic - exact).abs() / exact < 0.02);

    let big = write_config(dir.path(), "big.json", &chain_config(&[0.5; 16], 4));
    let out = fbnet(&["oracle", &big]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("states"));
}

fn keys(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let p = format!("{prefix}.{k}");
                out.push(p.clone());
                keys(x, &p, out);
            }
        }
        Value::Array(items) => {
            if let Some(first) = items.first() {
                keys(first, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

#[test]
fn report_schema_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let dead = write_config(dir.path(), "dead.json", &chain_config(&[1.0, 1.0], 2));
    let a = json(&fbnet(&["compare", &config("two_hop.json"), "--epochs", "20000"]));
    let b = json(&fbnet(&["compare", &dead, "--epochs", "20000"]));
    let (mut ka, mut kb) = (Vec::new(), Vec::new());
    keys(&a, "", &mut ka);
    keys(&b, "", &mut kb);
    assert_eq!(ka, kb);
}
