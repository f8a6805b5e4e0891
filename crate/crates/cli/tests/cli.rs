use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sadsac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sadsac"))
        .args(args)
        .env_remove("SADSAC_THREADS")
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = sadsac(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn code(args: &[&str]) -> i32 {
    sadsac(args).status.code().expect("exited normally")
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn fit_bird_ldr1() {
    let v = json(&["fit", "--dataset", "bird", "--family", "ldr1"]);
    let p = &v["fits"]["ldr1"]["params"];
    assert_eq!(p["family"], "ldr1");
    assert!((f(&p["a"]) - 14.6968).abs() < 0.01);
    assert!((f(&p["b"]) - 0.04407).abs() < 1e-3);
    assert!((f(&p["c"]) - 0.7717).abs() < 1e-3);
    assert_eq!(v["command"], "fit");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn fit_reports_aic_difference() {
    let v = json(&["fit", "--dataset", "swine", "--family", "ldr1,rdr1"]);
    let d = f(&v["aic_difference"]["ldr1-rdr1"]);
    assert!((d - 0.45).abs() < 0.05, "{d}");
}

#[test]
fn keys_are_sorted() {
    let out = sadsac(&["richness", "--dataset", "swine"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let top: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("  \""))
        .map(|l| l.trim().split('"').nth(1).unwrap())
        .collect();
    let mut sorted = top.clone();
    sorted.sort_unstable();
    assert_eq!(top, sorted);
    assert!(top.contains(&"command") && top.contains(&"version"));
}

#[test]
fn richness_accident() {
    let v = json(&["richness", "--dataset", "accident"]);
    let e = f(&v["e_star"]["total"]);
    assert!((e - 8249.2).abs() < 0.5, "{e}");
}

#[test]
fn infinite_values_print_as_inf() {
    let v = json(&[
        "hill",
        "--params",
        r#"{"family":"ldr1","a":10,"b":0,"c":1.5}"#,
        "--q",
        "0,2",
    ]);
    assert_eq!(v["hill"]["0"], "inf");
    assert_eq!(v["hill"]["2"], 0.0);
}

#[test]
fn diagnose_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let svg = dir.path().join("d.svg");
    let v = json(&[
        "diagnose",
        "--dataset",
        "bird",
        "--plot",
        "d1d2",
        "--csv",
        csv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(v["command"], "diagnose");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 201);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));
}

#[test]
fn fof_file_roundtrip_through_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = sadsac(&["dataset", "swine"]);
    assert!(out.status.success());
    let path = write(
        dir.path(),
        "swine.csv",
        &String::from_utf8(out.stdout).unwrap(),
    );
    let a = json(&["richness", "--fof", &path]);
    let b = json(&["richness", "--dataset", "swine"]);
    assert_eq!(a["chao1"], b["chao1"]);
}

#[test]
fn bootstrap_is_reproducible() {
    let args = [
        "bootstrap",
        "--dataset",
        "tomato",
        "--target",
        "unseen",
        "--B",
        "199",
        "--seed",
        "5",
    ];
    let a = json(&args);
    let b = json(&args);
    assert_eq!(a, b);
    let lo = &a["lower"];
    let hi = &a["upper"];
    assert!(lo.is_number() || lo == "inf");
    assert!(hi.is_number() || hi == "inf");
}

#[test]
fn simulate_outputs_fof_csv() {
    let out = sadsac(&[
        "simulate",
        "--params",
        r#"{"family":"ldr1","a":50,"b":0.1,"c":0.5}"#,
        "--seed",
        "3",
        "--t0",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("k,")), "{text}");
}

#[test]
fn sacfit_mle_and_curvefit() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "sac.csv",
        "t,cum_species\n0.2,40\n0.4,61\n0.6,75\n0.8,85\n1.0,93\n",
    );
    let m = json(&[
        "sacfit",
        "--input",
        &path,
        "--family",
        "geometric",
        "--t",
        "2",
    ]);
    let c = json(&[
        "sacfit",
        "--input",
        &path,
        "--family",
        "geometric",
        "--method",
        "curvefit",
        "--t",
        "2",
    ]);
    let pm = f(&m["curve"][0]["psi"]);
    let pc = f(&c["curve"][0]["psi"]);
    assert!(pm > 93.0 && pc > 93.0);
    assert!((pm - pc).abs() / pm < 0.1);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(
        code(&["bootstrap", "--dataset", "swine", "--target", "e_star"]),
        2
    );
    assert_eq!(code(&["richness", "--dataset", "nope"]), 2);
    assert_eq!(code(&["fit", "--dataset", "swine", "--family", "nope"]), 2);
    assert_eq!(
        code(&[
            "bootstrap",
            "--dataset",
            "swine",
            "--target",
            "e_star",
            "--B",
            "20",
            "--seed",
            "1"
        ]),
        2
    );
    assert_eq!(code(&["richness", "--dataset", "swine", "--bogus"]), 2);
    assert_eq!(code(&["richness", "--fof", "/nonexistent/x.csv"]), 2);
    assert_eq!(code(&["richness", "--dataset", "swine", "--t0", "-1"]), 2);
    let out = Command::new(env!("CARGO_BIN_EXE_sadsac"))
        .args(["richness", "--dataset", "swine"])
        .env("SADSAC_THREADS", "x")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_csv_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "bad.csv", "k,count\n1,5\n1,3\n");
    let out = sadsac(&["richness", "--fof", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn thread_count_does_not_change_results() {
    let args = [
        "bootstrap",
        "--dataset",
        "swine",
        "--target",
        "hill:0,2",
        "--family",
        "ldr1",
        "--B",
        "39",
        "--seed",
        "9",
    ];
    let one = Command::new(env!("CARGO_BIN_EXE_sadsac"))
        .args(args)
        .env("SADSAC_THREADS", "1")
        .output()
        .unwrap();
    let three = Command::new(env!("CARGO_BIN_EXE_sadsac"))
        .args(args)
        .env("SADSAC_THREADS", "3")
        .output()
        .unwrap();
    assert!(
        one.status.success(),
        "{}",
        String::from_utf8_lossy(&one.stderr)
    );
    assert_eq!(one.stdout, three.stdout);
}
