use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kramers(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kramers"))
        .args(args)
        .env("KRAMERS_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn benchmark() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.json")
}

fn small_config(dir: &Path, sigma: &str) -> PathBuf {
    let text = format!(
        r#"{{
  "run.d": 1, "run.N": 16, "run.T": 0.5, "run.alpha": 1.0, "run.seed": 7,
  "run.h0": 0.1, "run.eps_grid": [0.2, 0.1], "run.replicas": 4, "run.samples_per_replica": 2,
  "potential.kind": "quadratic", "potential.lambda": 1.0, "potential.kappa": 0.0,
  "noise.kind": "scalar-ou", "noise.gamma": 1.0, "noise.sigma": {sigma},
  "limit.modes": ["paper", "green-kubo"], "limit.gk_horizon": 20.0, "limit.gk_reps": 4,
  "output.dir": "unused", "output.format": "csv", "output.trajectory": true
}}"#
    );
    let p = dir.join("small.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(path: &Path) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).count() - 1
}

#[test]
fn w2_of_identical_files_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    std::fs::write(&a, "x\n0.5\n-1.25\n3.0\n").unwrap();
    let o = kramers(&["w2", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "0.0");
}

#[test]
fn w2_writes_table_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "0\n1\n").unwrap();
    std::fs::write(&b, "1\n2\n").unwrap();
    let out = dir.path().join("w");
    let o = kramers(&[
        "w2",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next().unwrap(), "1.0");
    assert_eq!(data_rows(&out.join("w2.csv")), 1);
}

#[test]
fn missing_config_names_the_path() {
    let o = kramers(&["converge", "/nonexistent/where.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("/nonexistent/where.json"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(kramers(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        kramers(&["converge", "x.json", "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(kramers(&[]).status.code(), Some(1));
    assert_eq!(kramers(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    let text = std::fs::read_to_string(small_config(dir.path(), "1.0")).unwrap();
    std::fs::write(&p, text.replace("\"run.seed\"", "\"run.sede\"")).unwrap();
    let o = kramers(&["simulate-eps", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run.sede"));
}

#[test]
fn numeric_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "1e308");
    let out = dir.path().join("o");
    let o = kramers(&[
        "simulate-eps",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("numeric failure"));
}

#[test]
fn simulation_commands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "1.0");
    let out = dir.path().join("o");
    let o = out.to_str().unwrap();
    let c = cfg.to_str().unwrap();
    for cmd in [
        "simulate-eps",
        "simulate-limit",
        "estimate-gk",
        "converge",
        "diagnose",
    ] {
        let r = kramers(&[cmd, c, "--out", o]);
        assert_eq!(r.status.code(), Some(0), "{cmd}: {}", stderr(&r));
    }
    // 2 eps values x 4 replicas x 2 particles
    assert_eq!(data_rows(&out.join("simulate_eps.csv")), 16);
    assert_eq!(data_rows(&out.join("simulate_limit.csv")), 16);
    assert!(out.join("trajectory_eps_0.csv").exists());
    assert!(out.join("trajectory_limit_paper.csv").exists());
    assert_eq!(data_rows(&out.join("converge.csv")), 2);
    let diag = std::fs::read_to_string(out.join("diagnose.csv")).unwrap();
    assert!(diag.contains("uv_check,2.0000000000000001e-1,v_msq,"));
    assert!(diag.contains("summary,nan,v_msq_loglog_slope,"));
    let gk = std::fs::read_to_string(out.join("gk.csv")).unwrap();
    assert!(gk.starts_with("# config: {"));
    assert!(gk.contains("green_kubo,nan,g_1_1,"));

    // pooled terminal samples are valid w2 input
    let s = out.join("simulate_eps.csv");
    let r = kramers(&["w2", s.to_str().unwrap(), s.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", stderr(&r));
}

#[test]
fn converge_on_shipped_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let o = kramers(&[
        "converge",
        benchmark().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("converge.csv")).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        lines[0],
        "eps,w2_paper_mode,w2_gk_mode,ci_halfwidth,n_samples,w2_method"
    );
    assert_eq!(lines.len() - 1, 4);
    assert!(text.lines().next().unwrap().starts_with("# config: "));
}
