use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spindle-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn same_seed_gives_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let out = sim(&[
            "simulate", "sssp", "--eps", "0.01", "--levels", "10", "--paths", "3", "--seed", "5", "--out",
            d.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    assert_eq!(fa.len(), 6);
    assert_eq!(fa, fb);
    let trace = String::from_utf8(fa.iter().find(|f| f.0 == "trace_0000.csv").unwrap().1.clone()).unwrap();
    assert!(trace.starts_with("level,total_mass,atoms\n0,1,1\n"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "alpha = 0.5\ntheta = 0.0\neps = 0.01\nlevels = 4\nseed = 3\n").unwrap();
    let dir = tmp.path().join("o");
    let out = sim(&[
        "simulate", "kernel", "--config", cfg.to_str().unwrap(), "--levels", "7", "--out", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.join("trace_0000.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 8);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(sim(&["validate", "no-such-check"]).status.code(), Some(2));
    assert_eq!(sim(&["simulate", "sssp", "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(sim(&["frobnicate"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "colour = 3\n").unwrap();
    assert_eq!(sim(&["simulate", "sssp", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn list_names_every_check() {
    let out = sim(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 16);
    assert!(text.contains("clade-lifetime"));
    assert!(text.contains("special-functions"));
}

#[test]
fn validate_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sim(&["validate", "special-functions", "--profile", "quick", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let json = fs::read_to_string(tmp.path().join("special-functions.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v.as_array().unwrap().iter().all(|r| r["pass"] == true));
    let csv = fs::read_to_string(tmp.path().join("special-functions.csv")).unwrap();
    assert!(csv.starts_with("name,statistic,threshold,n,pass,seed\n"));
}

#[test]
fn failing_check_exits_1() {
    // far too few paths for the tolerance
    let out = sim(&["validate", "clade-lifetime", "--paths", "20", "--eps", "0.01", "--seed", "2"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
}
