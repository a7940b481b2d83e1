use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cbmdetect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbmdetect")).args(args).output().expect("spawn cbmdetect")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

const EXPERIMENT: &str = r#"{
  "scenario": {"n": 20, "a": 3.0, "zeta": 0.1, "hamming": 5, "nu": {"at": 3}},
  "detector": {"mode": "ldp", "epsilon": 3.0, "b": 2.0},
  "trials": 20,
  "truncation": 60
}"#;

fn write_experiment(dir: &TempDir) -> String {
    let p = path(dir, "experiment.json");
    fs::write(&p, EXPERIMENT).unwrap();
    p
}

#[test]
fn threshold_prints_ldp_rhs() {
    let out = cbmdetect(&["threshold", "--thm", "1", "--n", "100", "--zeta", "0.1", "--eps-log-n"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let rhs: f64 = text
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("ldp_rhs="))
        .expect("ldp_rhs printed")
        .parse()
        .unwrap();
    // (10/9)·(101/99)
    assert!((rhs - 1010.0 / 891.0).abs() < 1e-6, "{text}");
    let named = cbmdetect(&["threshold", "--thm", "ldp-recovery", "--n", "100", "--zeta", "0.1", "--eps-log-n"]);
    assert_eq!(stdout(&named), stdout(&out));
}

#[test]
fn generate_noiseless_graph() {
    let dir = TempDir::new().unwrap();
    let g = path(&dir, "g.csv");
    let out = cbmdetect(&["generate", "--n", "4", "--p", "1", "--zeta", "1e-12", "--labels", "++--", "--seed", "7", "--out", &g]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&g).unwrap();
    let mut rows: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("i,j,w")).skip(1).collect();
    rows.sort();
    assert_eq!(rows, ["0,1,1", "0,2,-1", "0,3,-1", "1,2,-1", "1,3,-1", "2,3,1"]);
}

#[test]
fn detect_writes_trajectory() {
    let dir = TempDir::new().unwrap();
    let cfg = write_experiment(&dir);
    let traj = path(&dir, "traj.csv");
    let out = cbmdetect(&["detect", "--mode", "ldp", "--config", &cfg, "--seed", "11", "--out", &traj]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&traj).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,stat,noisy_stat,stopped,hamming_est_vs_post"));
    let mut last_t = 0;
    let mut count = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let t: u64 = fields[0].parse().unwrap();
        let stat: f64 = fields[1].parse().unwrap();
        assert!(t > last_t);
        assert!(stat >= 0.0);
        last_t = t;
        count += 1;
    }
    assert!(count > 0);
}

#[test]
fn same_seed_same_bytes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_experiment(&dir);
    let run = |name: &str| {
        let report = path(&dir, name);
        let out = cbmdetect(&["simulate", "--kind", "delay", "--config", &cfg, "--seed", "5", "--out", &report]);
        assert_eq!(code(&out), 0);
        (stdout(&out), fs::read(&report).unwrap())
    };
    assert_eq!(run("a.json"), run("b.json"));

    let gen = |name: &str| {
        let g = path(&dir, name);
        cbmdetect(&["generate", "--n", "30", "--a", "4", "--zeta", "0.2", "--seed", "9", "--out", &g]);
        fs::read(&g).unwrap()
    };
    assert_eq!(gen("g1.csv"), gen("g2.csv"));
}

fn write_stream(p: &Path) {
    let mut text = String::from("n=20\nt,i,j,w\n");
    for t in 1..=4 {
        text.push_str(&format!("{t},0,1,1\n{t},2,3,-1\n{t},4,5,1\n{t},0,19,-1\n"));
    }
    fs::write(p, text).unwrap();
}

#[test]
fn every_verb_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_experiment(&dir);
    let g = path(&dir, "g.csv");
    let pg = path(&dir, "pg.csv");
    let stream = path(&dir, "stream.csv");
    write_stream(Path::new(&stream));

    let ok = |args: &[&str]| {
        let out = cbmdetect(args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        stdout(&out)
    };
    ok(&["generate", "--n", "12", "--a", "4", "--zeta", "0.1", "--seed", "1", "--out", &g]);
    let s = ok(&["perturb", "--input", &g, "--eps", "2", "--p", "0.5", "--zeta", "0.1", "--seed", "2", "--out", &pg]);
    assert!(s.contains("p_tilde="));
    let s = ok(&["recover", "--input", &g, "--estimator", "exhaustive", "--seed", "3"]);
    assert!(s.starts_with("labels="));
    let s = ok(&["recover", "--input", &g, "--estimator", "spectral", "--release", "stability", "--eps", "2", "--seed", "3"]);
    assert!(s.contains("released="));
    let s = ok(&["ingest", "--input", &stream, "--out", &path(&dir, "norm.csv")]);
    assert!(s.contains("steps=4"));
    let s = ok(&["detect", "--config", &cfg, "--seed", "4", "--input", &stream]);
    assert!(s.contains("detect:"));
    ok(&["simulate", "--kind", "arl", "--config", &cfg, "--b", "1", "--seed", "6"]);
    ok(&["simulate", "--kind", "phase", "--n", "12", "--eps", "2", "--a-values", "1,4", "--zeta-values", "0.1", "--trials", "4", "--estimator", "spectral", "--seed", "7"]);
    ok(&["simulate", "--kind", "compare", "--n-values", "20", "--p", "0.5", "--zeta", "0.1", "--eps", "2", "--trials", "1", "--seed", "8"]);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_experiment(&dir);
    assert_eq!(code(&cbmdetect(&["--help"])), 0);
    assert_eq!(code(&cbmdetect(&["generate", "--n", "4", "--p", "0.5", "--zeta", "0.1"])), 2);
    assert_eq!(code(&cbmdetect(&["detect", "--config", &path(&dir, "missing.json"), "--seed", "1"])), 2);
    // A run length capped at one step cannot reach the e^5 guarantee.
    let out = cbmdetect(&["simulate", "--kind", "arl", "--config", &cfg, "--b", "5", "--truncation", "1", "--seed", "1"]);
    assert_eq!(code(&out), 1, "{}", stdout(&out));
}
