use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_syncscope"))
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn exec(args: &[&str], config: &Path) -> Output {
    bin().args(args).arg(config).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

const PAIR: &str = r#"{
  "nodes": [
    {"id": "a", "kind": "voltage", "inertia": 0.2, "damping": DAMP, "amplitude": 1.0, "angle": 0.15},
    {"id": "b", "kind": "voltage", "inertia": 0.2, "damping": DAMP, "amplitude": 1.0, "angle": -0.15}
  ],
  "channels": [
    {"m": "a", "n": "b", "poles": [[-30.0, 0.0]], "residues": [[63.0, -626.0]]}
  ],
  "perturbations": PERT
}"#;

fn pair(damping: f64, perturbations: &str) -> String {
    PAIR.replace("DAMP", &damping.to_string()).replace("PERT", perturbations)
}

#[test]
fn analyze_certified_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "pair.json", &pair(1.0, "[]"));
    let out = exec(&["analyze"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["verdict"], "CertifiedStable");
    assert!(report["margin"].as_f64().unwrap() > 0.0);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(report["modes"].as_array().unwrap().len(), 2);
}

#[test]
fn analyze_undamped_is_not_certified() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "pair.json", &pair(0.0, "[]"));
    let out = exec(&["analyze"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    let report = json(&out);
    assert_eq!(report["verdict"], "NotCertified");
    let min_zeta = report["modes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["zeta"].as_f64().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!(min_zeta < 1e-5);
}

#[test]
fn analyze_csv_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "pair.json", &pair(1.0, "[]"));
    let target = dir.path().join("sweep.csv");
    let out = bin()
        .args(["analyze", "--csv", "--out"])
        .arg(&target)
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&target).unwrap();
    assert!(text.starts_with('#'));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "omega,phi_0,phi_1,loop_gain,forbidden_re,forbidden_im");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 2000);
}

#[test]
fn errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = exec(&["analyze"], &missing);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));

    let broken = write(&dir, "broken.json", "{\"nodes\": [");
    let out = exec(&["modes"], &broken);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let cfg = write(&dir, "pair.json", &pair(1.0, "[]"));
    let out = exec(&["simulate", "--gain-mode", "sideways"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("invalid value") && err.contains("--gain-mode"), "{err}");

    let out = bin().env("SYNCSCOPE_THREADS", "zero").arg("analyze").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

fn data_rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn simulate_unperturbed_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "pair.json", &pair(1.0, "[]"));
    let out = exec(&["simulate", "--duration", "1"], &cfg);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# diverged: no"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 1001);
    for row in &rows {
        for (v, v0) in row.iter().zip(&rows[0]).skip(1) {
            assert!((v - v0).abs() < 1e-9);
        }
    }
}

#[test]
fn simulate_json_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "pair.json", &pair(1.0, r#"[{"node": "a", "delta_theta": 0.01}]"#));
    let target = dir.path().join("trace.json");
    let out = bin()
        .args(["simulate", "--gain-mode", "quasistatic", "--dt", "0.0005", "--duration", "2", "--out"])
        .arg(&target)
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(trace["metadata"]["gain_mode"], "quasistatic");
    assert_eq!(trace["metadata"]["dt"].as_f64(), Some(0.0005));
    assert_eq!(trace["times"].as_array().unwrap().len(), 2001);
    assert!(trace["diverged"].is_null());
    let theta0 = trace["theta"][0][0].as_f64().unwrap();
    assert!((theta0 - 0.16).abs() < 1e-12);
}

#[test]
fn simulate_divergent_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir,
        "runaway.json",
        r#"{
          "nodes": [{"id": "g", "kind": "voltage", "inertia": 1.0, "amplitude": 1.0, "angle": 0.0,
                     "self_channel": {"poles": [[-2000.0, 0.0]], "residues": [[0.0, 4e7]]}}],
          "perturbations": [{"node": "g", "delta_omega": 0.01}]
        }"#,
    );
    let out = exec(&["simulate"], &cfg);
    assert_eq!(out.status.code(), Some(3));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# DIVERGED at t="));
    let rows = data_rows(&text);
    assert!(rows.len() < 10_001);
    assert!(rows.iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn modes_symmetric_pair_without_frequency_shift() {
    // G′(jω₀) = −b/(jω₀ − a)² is real, so with equal angles every γ is a
    // multiple of π and Γ vanishes
    let dir = tempfile::tempdir().unwrap();
    let (a, w0) = (-10.0f64, 2.0 * std::f64::consts::PI * 50.0);
    // b = 0.01 (jω₀ − a)²
    let b = (0.01 * (a * a - w0 * w0), 0.01 * (-2.0 * a * w0));
    let body = format!(
        r#"{{
          "nodes": [
            {{"id": "a", "kind": "voltage", "inertia": 1.0, "amplitude": 1.0, "angle": 0.0}},
            {{"id": "b", "kind": "voltage", "inertia": 1.0, "amplitude": 1.0, "angle": 0.0}}
          ],
          "channels": [{{"m": "a", "n": "b", "poles": [[{a}, 0.0]], "residues": [[{}, {}]]}}]
        }}"#,
        b.0, b.1
    );
    let cfg = write(&dir, "sym.json", &body);
    let out = exec(&["modes"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    // K_11 = −K_12 = −Im G(jω₀) = 0.01 ω₀
    let k = 0.01 * w0;
    let xi = report["xi"].as_array().unwrap();
    assert!(xi[0][0].as_f64().unwrap().abs() < 1e-9);
    assert!((xi[1][0].as_f64().unwrap().abs() - 2.0 * k).abs() < 1e-9 * k);
    assert!(xi[1][1].as_f64().unwrap().abs() < 1e-9);
    // zero up to the roundoff in sin(π)
    assert!(report["sigma_max"].as_f64().unwrap() < 1e-14);
    assert_eq!(report["synchronous_mode"].as_u64(), Some(0));
}

#[test]
fn modes_five_node_residual() {
    let dir = tempfile::tempdir().unwrap();
    let mut nodes = Vec::new();
    let mut channels = Vec::new();
    for i in 0..5 {
        nodes.push(format!(
            r#"{{"id": "n{i}", "kind": "voltage", "inertia": {}, "damping": 0.5, "amplitude": {}, "angle": {}}}"#,
            0.1 + 0.07 * i as f64,
            1.0 + 0.01 * i as f64,
            0.05 * i as f64 - 0.1
        ));
    }
    for (m, n) in [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)] {
        channels.push(format!(
            r#"{{"m": "n{m}", "n": "n{n}", "poles": [[{}, 0.0]], "residues": [[{}, {}]]}}"#,
            -20.0 - 5.0 * m as f64,
            30.0 + n as f64,
            -600.0 - 40.0 * m as f64
        ));
    }
    let body = format!(r#"{{"nodes": [{}], "channels": [{}]}}"#, nodes.join(","), channels.join(","));
    let cfg = write(&dir, "five.json", &body);
    let out = exec(&["modes"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert!(report["eigen_residual"].as_f64().unwrap() < 1e-10);
    assert_eq!(report["xi"].as_array().unwrap().len(), 5);
    assert_eq!(report["participation"].as_array().unwrap().len(), 5);
}

#[test]
fn thread_count_does_not_change_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir, "pair.json", &pair(0.7, "[]"));
    let run = |threads: &str| {
        bin().env("SYNCSCOPE_THREADS", threads).arg("analyze").arg(&cfg).output().unwrap().stdout
    };
    let one = run("1");
    assert!(!one.is_empty());
    assert_eq!(one, run("1"));
    assert_eq!(one, run("4"));
}

#[test]
fn branch_network_config_runs_quasi_static() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir,
        "grid.json",
        r#"{
          "nodes": [
            {"id": "sg", "kind": "voltage", "inertia": 0.5, "damping": 1.0, "amplitude": 1.0, "angle": 0.1},
            {"id": "ibr", "kind": "voltage", "inertia": 0.1, "damping": 1.0, "amplitude": 1.0, "angle": 0.0}
          ],
          "network": {
            "branches": [
              {"from": "sg", "to": "bus", "r": 0.01, "l": 0.001},
              {"from": "bus", "to": "ibr", "r": 0.01, "l": 0.001}
            ],
            "passive_nodes": ["bus"]
          },
          "perturbations": [{"node": "sg", "delta_theta": 0.01}]
        }"#,
    );
    let out = exec(&["analyze"], &cfg);
    assert!(matches!(out.status.code(), Some(0) | Some(2)));
    let out = exec(&["simulate", "--duration", "0.5"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = exec(&["simulate", "--gain-mode", "dynamic"], &cfg);
    assert_eq!(out.status.code(), Some(1));
}
