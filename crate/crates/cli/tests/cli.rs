use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn qpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpc")).args(args).output().expect("spawn qpc")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(dir: &Path, name: &str, body: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = write_config(dir, name, body);
    let out = dir.join(format!("out-{name}"));
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (qpc(&args), out)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn report(trace: &Path) -> (i32, String) {
    let o = qpc(&["report", trace.to_str().unwrap()]);
    (o.status.code().unwrap(), stdout(&o))
}

#[test]
fn dc_scan_on_rational_exits_zero_with_witness() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "dc.json", r#"{"schema": 1, "kind": "dc-scan", "params": {"alpha": "1/2"}}"#, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("trace.json")).unwrap()).unwrap();
    assert_eq!(t["report"]["witness"]["k"], serde_json::json!([2]));
    assert!(t["report"]["gamma_star"].is_null());
}

#[test]
fn bracket_estimate_without_seed_exits_one() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "b.json", r#"{"schema": 1, "kind": "bracket-estimate"}"#, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    assert!(!out.exists());
}

#[test]
fn input_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(qpc(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
    let (o, _) = run(dir.path(), "v.json", r#"{"schema": 9, "kind": "dc-scan"}"#, &[]);
    assert_eq!(o.status.code(), Some(1));
    let (o, _) = run(dir.path(), "k.json", r#"{"schema": 1, "kind": "warp-drive"}"#, &[]);
    assert_eq!(o.status.code(), Some(1));
    let (o, _) = run(dir.path(), "t.json", r#"{"schema": 1, "kind": "homological-bench", "seed": 1, "params": {"tol": 0}}"#, &[]);
    assert_eq!(o.status.code(), Some(1));
    let (o, _) = run(dir.path(), "i.json", r#"{"schema": 1, "kind": "kam-run", "io": {"input": "absent.json"}}"#, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(qpc(&["run"]).status.code(), Some(1));
}

#[test]
fn empty_trace_reports_no_steps() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("empty.json");
    std::fs::write(&p, "").unwrap();
    let (code, text) = report(&p);
    assert_eq!(code, 0);
    assert!(text.contains("no steps executed"));
}

#[test]
fn malformed_trace_exits_one() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\"schema\": 1, \"kind\": \"kam-run\"}").unwrap();
    assert_eq!(report(&p).0, 1);
}

#[test]
fn scalar_kam_run_passes_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"schema": 1, "kind": "kam-run", "params": {"reference": "scalar"}}"#;
    let (o1, out1) = run(dir.path(), "k1.json", cfg, &["--threads", "1"]);
    let (o4, out4) = run(dir.path(), "k4.json", cfg, &["--threads", "4"]);
    assert_eq!(o1.status.code(), Some(0), "{}", stdout(&o1));
    assert_eq!(o4.status.code(), Some(0));
    for f in ["trace.json", "trace.csv"] {
        assert_eq!(std::fs::read(out1.join(f)).unwrap(), std::fs::read(out4.join(f)).unwrap(), "{f} differs");
    }
    let (code, text) = report(&out1.join("trace.json"));
    assert_eq!(code, 0);
    let rows: Vec<&str> = text.lines().filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit())).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|l| l.trim_end().ends_with("ok")), "{text}");
    assert!(!text.contains("wall time"));
}

#[test]
fn verbose_adds_wall_time() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "r.json", r#"{"schema": 1, "kind": "renorm-run", "params": {"m_max": 2}}"#, &["--verbose"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, text) = report(&out.join("trace.json"));
    assert!(text.contains("wall time"));
}

#[test]
fn gevrey_report_shows_two_slopes_and_ratio() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "g.json", r#"{"schema": 1, "kind": "gevrey-ladder"}"#, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let (_, text) = report(&out.join("trace.json"));
    assert!(text.contains("green slope"));
    assert!(text.contains("truncation slope"));
    assert!(text.contains("slope ratio"));
    assert!(out.join("trace.csv").is_file());
}

#[test]
fn falsified_bound_exits_two_with_record() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run(dir.path(), "g.json", r#"{"schema": 1, "kind": "gevrey-ladder", "params": {"min_ratio": 100}}"#, &[]);
    assert_eq!(o.status.code(), Some(2));
    let rec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("falsification.json")).unwrap()).unwrap();
    assert_eq!(rec["failed"][0]["name"], "slope_ratio");
}

#[test]
fn stochastic_runs_repeat_per_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"schema": 1, "kind": "homological-bench", "seed": 5, "params": {"count": 12, "modes": 16}}"#;
    let (a, out_a) = run(dir.path(), "h1.json", cfg, &[]);
    let (b, out_b) = run(dir.path(), "h2.json", cfg, &["--threads", "2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(std::fs::read(out_a.join("trace.json")).unwrap(), std::fs::read(out_b.join("trace.json")).unwrap());
    let cfg = r#"{"schema": 1, "kind": "bracket-estimate", "seed": 42}"#;
    let (a, out_a) = run(dir.path(), "b1.json", cfg, &[]);
    let (_, out_b) = run(dir.path(), "b2.json", cfg, &[]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(std::fs::read(out_a.join("trace.json")).unwrap(), std::fs::read(out_b.join("trace.json")).unwrap());
}
