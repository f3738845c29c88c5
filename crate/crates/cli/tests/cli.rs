//! End-to-end checks of the command-line interface and its file formats.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_noisy-ipm"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("noisy-ipm-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn solve_writes_trace_and_summary() {
    let dir = tmpdir("solve");
    let trace = dir.join("run.csv");
    let status = bin()
        .args([
            "solve",
            "--problem",
            "bound1d",
            "--mu",
            "1e-4",
            "--eps-f",
            "1e-2",
            "--eps-c",
            "1e-2",
            "--seed",
            "7",
            "--max-iter",
            "50",
            "--out",
        ])
        .arg(&trace)
        .status()
        .unwrap();
    assert!(status.success());

    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,tau,alpha_max,alpha,j,dm,merit_noisy,stat_kkt_noisy,stat_infeas_noisy,stat_kkt_true,stat_infeas_true,shift,mu"
    );
    assert_eq!(lines.count(), 50);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(summary["problem"], "bound1d");
    assert_eq!(summary["iters"], 50);
    assert!(summary["geo_kkt_true"].as_f64().unwrap().is_finite());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn solve_accepts_json_problem_configuration() {
    let dir = tmpdir("config");
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        r#"{
            "problem": "qp_box2",
            "noise": { "eps_f": 1e-2, "seed": 3, "keying": "hash-of-point" },
            "scaling": true,
            "mu": 1e-1,
            "max_iter": 40
        }"#,
    )
    .unwrap();
    let trace = dir.join("run.csv");
    let out = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(&trace)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(trace.exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn experiment_writes_profiles_and_summaries() {
    let dir = tmpdir("experiment");
    let out = bin()
        .args([
            "experiment",
            "--suite",
            "convex",
            "--mus",
            "1e-1",
            "--noise",
            "1e-2",
            "--seeds",
            "0",
            "--max-iter",
            "60",
            "--jobs",
            "2",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let entries: Vec<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    let traces = entries.iter().filter(|n| n.ends_with(".csv") && !n.starts_with("profile")).count();
    let profiles = entries.iter().filter(|n| n.starts_with("profile")).count();
    assert_eq!(traces, 8, "one trace per convex problem: {entries:?}");
    assert_eq!(profiles, 4, "one profile per measure: {entries:?}");

    let profile = entries.iter().find(|n| n.contains("geo_kkt_true")).unwrap();
    let text = std::fs::read_to_string(dir.join(profile)).unwrap();
    assert!(text.starts_with("threshold,percent\n"));
    // Percent column must be monotone in the threshold.
    let percents: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(percents.windows(2).all(|w| w[0] <= w[1]));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_problem_fails_cleanly() {
    let dir = tmpdir("unknown");
    let out = bin()
        .args(["solve", "--problem", "not_a_problem", "--out"])
        .arg(dir.join("x.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown problem"), "stderr: {stderr}");
    std::fs::remove_dir_all(&dir).ok();
}
