use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use serde_json::Value;
use sff_flow::ambient::Ambient;
use sff_flow::mesh::{make_sphere, save_obj};
use sff_flow_cli::config::parse_config;

fn sffflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sffflow")).args(args).env_remove("SFFFLOW_OUT_DIR").output().expect("binary runs")
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.cfg");
    std::fs::write(
        &path,
        "ambient = \"euclidean\"\nmesh = \"icosphere:subdiv=1,r=1\"\nperturbation = \"harmonic:l=2\"\n\
         amplitude = 0.05\nmax_steps = 12\ndiag_every = 4\nsnapshot_every = 6\n",
    )
    .unwrap();
    path
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr)
        .unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn run_writes_history_snapshots_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("a");
    let o = sffflow(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["steps"], 12);
    assert!(report["energy_final"].as_f64().unwrap() < report["energy_initial"].as_f64().unwrap());
    for f in ["history.csv", "report.json", "config.cfg", "snap_0.ply", "snap_6.ply", "snap_12.ply"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(csv.starts_with("step,t,dt,E,W,area"));
    assert_eq!(csv.lines().count(), 14);
}

#[test]
fn repeated_runs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let read = |name: &str| {
        let out = dir.path().join(name);
        assert!(sffflow(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
        std::fs::read(out.join("history.csv")).unwrap()
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn output_directory_follows_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_sffflow"))
        .args(["run", cfg.to_str().unwrap()])
        .env("SFFFLOW_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("history.csv").exists());
}

#[test]
fn derive_flat_prints_trace_and_result() {
    let o = sffflow(&["derive", "--flat"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().last(), Some("{Δ²A, P(2,3), P(0,5)}"));
    assert!(text.contains("[rule1]"));
    assert!(!text.contains("Q("));
    let o = sffflow(&["derive", "commutator2"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().last(), Some("{P(0,3), Q(0,1,1)}"));
}

#[test]
fn check_passes_on_a_fine_icosphere() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ico4.obj");
    save_obj(&make_sphere(4, 1.0, [0.0; 3], Arc::new(Ambient::euclidean())).unwrap(), &path).unwrap();
    let o = sffflow(&["check", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn diagnose_reports_energies() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ico2.obj");
    save_obj(&make_sphere(2, 1.0, [0.0; 3], Arc::new(Ambient::euclidean())).unwrap(), &path).unwrap();
    let o = sffflow(&["diagnose", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.to_string().contains("not_applicable"));
}

#[test]
fn bad_config_reports_every_issue_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "ambient = \"euclidean\"\nmesh = \"icosphere:subdiv=1\"\ndt_cfl = -1.0\nbogus = 3\n").unwrap();
    let o = sffflow(&["run", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let v = stderr_json(&o);
    assert_eq!(v["error"], "config");
    let issues = v["issues"].as_array().unwrap();
    assert_eq!(issues.len(), 2);
    assert_eq!(issues[0]["line"], 3);
    assert_eq!(issues[0]["key"], "dt_cfl");
}

#[test]
fn other_failures_exit_nonzero_with_json() {
    let o = sffflow(&["derive", "nonsense"]);
    assert!(!o.status.success());
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("nonsense"));
    let o = sffflow(&["diagnose", "/nonexistent/mesh.obj"]);
    assert!(!o.status.success());
    stderr_json(&o);
}

#[test]
fn shipped_scenarios_parse_and_round_trip() {
    let mut n = 0;
    for e in std::fs::read_dir(scenarios()).unwrap() {
        let path = e.unwrap().path();
        if path.extension().is_some_and(|x| x == "cfg") {
            let c = parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(c.to_text(), std::fs::read_to_string(&path).unwrap(), "{}", path.display());
            n += 1;
        }
    }
    assert!(n >= 4);
}
