use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unipc"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("unipc-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

const STUDY: &str = r#"{
  "schedule": {"kind": "vp-linear"},
  "model": {"family": "x-free-poly", "coeffs": [0.3, -1.2, 0.5], "dim": 4},
  "solvers": [{"order": 1, "corrector": "off"}, {"order": 2}, {"order": 3, "prediction": "data"}],
  "step_counts": [10, 20, 40, 80],
  "seed": 5
}"#;

fn run_study(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("study.json");
    fs::write(&cfg, STUDY).unwrap();
    bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join(out))
        .args(extra)
        .output()
        .unwrap()
}

fn without_seconds(text: &str) -> String {
    text.lines()
        .map(|l| l.rsplit_once(',').unwrap().0)
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn run_is_deterministic() {
    let dir = scratch("det");
    assert!(run_study(&dir, "a.csv", &["--seed", "9"]).status.success());
    assert!(run_study(&dir, "b.csv", &["--seed", "9", "--jobs", "3"])
        .status
        .success());
    let a = fs::read_to_string(dir.join("a.csv")).unwrap();
    let b = fs::read_to_string(dir.join("b.csv")).unwrap();
    assert_eq!(without_seconds(&a), without_seconds(&b));
    assert_eq!(a.lines().count(), 13);
    assert!(a.starts_with("solver,order,variant,bh,prediction,corrector,M,nfe,error,seconds\n"));

    assert!(run_study(&dir, "c.csv", &["--seed", "10"]).status.success());
    let c = fs::read_to_string(dir.join("c.csv")).unwrap();
    assert_ne!(without_seconds(&a), without_seconds(&c));
}

#[test]
fn fit_reads_results() {
    let dir = scratch("fit");
    assert!(run_study(&dir, "r.csv", &[]).status.success());
    let out = bin()
        .arg("fit")
        .arg("--in")
        .arg(dir.join("r.csv"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("solver=unip order=1"));
    assert!(text.contains("slope="));
}

#[test]
fn json_output() {
    let dir = scratch("json");
    assert!(run_study(&dir, "r.json", &["--format", "json"])
        .status
        .success());
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("r.json")).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 12);
    assert_eq!(v["fits"].as_array().unwrap().len(), 3);
    assert!(v["fits"][0]["fit"]["slope"].as_f64().unwrap() > 0.8);
}

#[test]
fn selftest_passes() {
    let out = bin().arg("selftest").output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);
}

#[test]
fn validation_errors_exit_2() {
    let dir = scratch("bad");
    let cfg = dir.join("bad.json");
    fs::write(&cfg, STUDY.replace("[10, 20, 40, 80]", "[10, 20, 20, 80]")).unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("strictly increasing"));

    fs::write(
        &cfg,
        STUDY.replace(
            r#"{"order": 2}"#,
            r#"{"order": 2, "order_schedule": "2111"}"#,
        ),
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = run_study(&dir, "x.csv", &["--format", "xml"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(2)
    );
}

#[test]
fn numeric_failures_exit_3() {
    let dir = scratch("fitfail");
    let csv = dir.join("r.csv");
    fs::write(
        &csv,
        "solver,order,variant,bh,prediction,corrector,M,nfe,error,seconds\n\
         unip,1,multistep,b2,noise,off,10,10,NaN,0.0\n\
         unip,1,multistep,b2,noise,off,20,20,5.0,0.0\n\
         unip,1,multistep,b2,noise,off,40,40,0.01,0.0\n",
    )
    .unwrap();
    let out = bin().arg("fit").arg("--in").arg(&csv).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}
