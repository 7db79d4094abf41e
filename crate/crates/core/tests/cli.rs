use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use anisodiff::io::{read_field, read_measurements, read_snapshots, Table};
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs")
}

fn anisodiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anisodiff"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_mode(mode: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![mode, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    anisodiff(&args)
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn error_block(o: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().find(|l| l.starts_with('{')).expect("error block on stderr");
    serde_json::from_str(line).unwrap()
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

const SMALL: &str = r#"{
  "n": 3, "t_final": 0.05, "steps": 20,
  "field": { "k11": "1+0.5*x*y", "k22": "1+0.25*x^2" },
  "initial": "sin(3*x)*cos(2*y+0.5)",
  "boundary": { "f1": "-1+y", "f2": "1-y", "f3": "-1+x", "f4": "1+x" },
  "source": "4*(x-0.5)*(y-0.5)",
  "measurement_times": [0.025, 0.05],
  "noise": { "level": 0.01, "seed": 5 }
}"#;

#[test]
fn missing_arguments_are_usage_errors() {
    assert_eq!(anisodiff(&[]).status.code(), Some(1));
    assert_eq!(anisodiff(&["forward"]).status.code(), Some(1));
    assert_eq!(anisodiff(&["sideways", "--config", "x.json"]).status.code(), Some(1));
    assert_eq!(anisodiff(&["--help"]).status.code(), Some(0));
}

#[test]
fn unreadable_config_reports_error_block() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_mode("forward", &dir.path().join("absent.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let e = error_block(&o);
    assert_eq!(e["error"]["kind"], "config");
    assert_eq!(e["error"]["exit_code"], 1);
}

#[test]
fn config_errors_name_the_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("\"source\": \"4*(x-0.5)*(y-0.5)\"", "\"source\": \"4*(x-\"");
    let cfg = write_config(dir.path(), "bad.json", &text);
    let o = run_mode("forward", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let msg = error_block(&o)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("source"), "{msg}");
    assert!(msg.contains("line 6"), "{msg}");

    let cfg = write_config(dir.path(), "mode.json", &SMALL.replacen('{', "{ \"mode\": \"forward\",", 1));
    let o = run_mode("invert", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(error_block(&o)["error"]["message"].as_str().unwrap().contains("mode"));

    let cfg = write_config(dir.path(), "typo.json", &SMALL.replacen('{', "{ \"stpes\": 3,", 1));
    assert_eq!(run_mode("forward", &cfg, dir.path(), &[]).status.code(), Some(1));
}

#[test]
fn non_positive_field_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "neg.json", &SMALL.replace("1+0.25*x^2", "x-0.5"));
    let o = run_mode("forward", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_block(&o)["error"]["exit_code"], 2);
}

#[test]
fn forward_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "fwd.json", SMALL);
    let o = run_mode("forward", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("snapshots.csv")).unwrap();
    assert!(text.starts_with("# anisodiff snapshots\n"));
    assert!(text.contains("# ordering = block-j, x-within-block\n"));
    assert!(!text.contains('\r'));
    let (times, states) = read_snapshots(&dir.path().join("snapshots.csv")).unwrap();
    assert_eq!(times.len(), 21);
    assert_eq!(times[20], 0.05);
    assert_eq!(states[0].len(), 16);
    let first_data_line = text.lines().find(|l| l.starts_with("0.")).unwrap();
    assert!(first_data_line.split(',').all(|f| f.contains('e') && f.split('e').next().unwrap().len() >= 18));
    assert_eq!(summary(dir.path())["mode"], "forward");
}

#[test]
fn seed_flag_controls_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "synth.json", SMALL);
    let outs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|s| dir.path().join(s)).collect();
    for (out, seed) in outs.iter().zip(["11", "11", "12"]) {
        let o = run_mode("synth", &cfg, out, &["--seed", seed]);
        assert_eq!(o.status.code(), Some(0));
    }
    let bytes = |p: &Path| std::fs::read(p.join("measurements.csv")).unwrap();
    assert_eq!(bytes(&outs[0]), bytes(&outs[1]));
    assert_ne!(bytes(&outs[0]), bytes(&outs[2]));
    let m = read_measurements(&outs[0].join("measurements.csv")).unwrap();
    assert_eq!(m.times, vec![0.025, 0.05]);
    assert!(m.delta > 0.0);
    assert_eq!(summary(&outs[0])["seed"], 11);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("check_jacobian.json");
    let (a, b) = (dir.path().join("one"), dir.path().join("four"));
    assert_eq!(run_mode("check-jacobian", &cfg, &a, &["--threads", "1"]).status.code(), Some(0));
    assert_eq!(run_mode("check-jacobian", &cfg, &b, &["--threads", "4"]).status.code(), Some(0));
    let read = |p: &Path| std::fs::read(p.join("summary.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(summary(&a)["pass"], true);
}

#[test]
fn failed_jacobian_check_exits_with_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replacen('{', r#"{ "jacobian_check": { "tolerance": 1e-300 },"#, 1);
    let cfg = write_config(dir.path(), "jac.json", &text);
    let o = run_mode("check-jacobian", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(summary(dir.path())["pass"], false);
}

#[test]
fn synth_then_invert_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let noiseless = SMALL.replace("\"level\": 0.01", "\"level\": 0.0");
    let cfg = write_config(dir.path(), "synth.json", &noiseless);
    let data = dir.path().join("data");
    assert_eq!(run_mode("synth", &cfg, &data, &[]).status.code(), Some(0));

    let inv = noiseless.replacen('{', r#"{ "measurements": "data/measurements.csv","#, 1);
    let cfg = write_config(dir.path(), "invert.json", &inv);
    let out = dir.path().join("inv");
    let o = run_mode("invert", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["converged"], true);
    assert!(s["k11_relative_error_interior"].as_f64().unwrap() <= 1e-3);
    assert!(s["k22_relative_error_interior"].as_f64().unwrap() <= 1e-3);
    let field = read_field(&out.join("field.csv")).unwrap();
    assert_eq!(field.degree(), 3);
    let history = Table::read(&out.join("history.csv")).unwrap();
    assert_eq!(history.columns[..4], ["iteration", "phi", "residual_norm", "mu"]);
}

#[test]
fn iteration_budget_exhaustion_is_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replacen('{', r#"{ "lm": { "max_iterations": 1 },"#, 1).replace("0.01", "1e-6");
    let cfg = write_config(dir.path(), "inv.json", &text);
    let o = run_mode("invert", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_block(&o)["error"]["kind"], "non_convergence");
    assert_eq!(summary(dir.path())["converged"], false);
}

#[test]
fn mms_mode_writes_convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
      "n": 8, "t_final": 0.1, "steps": 10,
      "field": { "k11": "1", "k22": "1" },
      "manufactured": {
        "solution": "exp(-t)*sin(pi*x)*sin(pi*y)",
        "degrees": [4, 6, 8], "spatial_steps": 200,
        "steps": [5, 10], "temporal_degree": 10
      }
    }"#;
    let cfg = write_config(dir.path(), "mms.json", text);
    assert_eq!(run_mode("mms-convergence", &cfg, dir.path(), &[]).status.code(), Some(0));
    let t = Table::read(&dir.path().join("convergence.csv")).unwrap();
    assert_eq!(t.rows.len(), 5);
    assert_eq!(summary(dir.path())["monotone_in_n"], true);
}
