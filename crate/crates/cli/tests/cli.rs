//! End-to-end tests of the `advgrid` binary: exit codes, file outputs and
//! the report round-trip.

use std::path::Path;
use std::process::{Command, Output};

fn advgrid(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advgrid"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn calibrate_lambda_prints_lambda_and_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = advgrid(&["calibrate-lambda", "--n-lines", "10"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    let lambda: f64 = lines.next().unwrap().strip_prefix("lambda ").unwrap().parse().unwrap();
    let ratio: f64 = lines.next().unwrap().strip_prefix("ratio ").unwrap().parse().unwrap();
    assert!(lambda > 0.0);
    assert!((ratio - 0.95).abs() < 1e-10);
}

#[test]
fn unknown_subcommand_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = advgrid(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_flag_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = advgrid(&["calibrate-lambda", "--n-lines", "ten"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = advgrid(&["run", "--config", "does-not-exist.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_artifacts_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = advgrid(&["report", "--out", "nonexistent"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_chronics_writes_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = advgrid(
        &["gen-chronics", "--out", "chron", "--count", "2", "--days", "1", "--seed", "5"],
        dir.path(),
    );
    assert!(out.status.success());
    for seed in [5, 6] {
        let text = std::fs::read_to_string(dir.path().join(format!("chron/gen-{seed}.csv")))
            .expect("file exists");
        // Header plus 288 steps.
        assert_eq!(text.lines().count(), 289);
        assert!(text.starts_with("step,load_B1,"));
    }
}

#[test]
fn run_prints_zero_score_for_do_nothing_and_round_trips_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = advgrid(
        &[
            "run",
            "--agent",
            "do_nothing",
            "--opponent",
            "do_nothing",
            "--out",
            "run1",
            "--stride",
            "12",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("do_nothing score 0.00"));
    let report_dir = dir.path().join("run1/report");
    let files = ["summary.json", "matrix.csv", "overflow_probs.csv", "series.csv"];
    let before: Vec<Vec<u8>> =
        files.iter().map(|f| std::fs::read(report_dir.join(f)).expect("report file")).collect();

    let out = advgrid(&["report", "--out", "run1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (f, old) in files.iter().zip(&before) {
        let new = std::fs::read(report_dir.join(f)).unwrap();
        assert_eq!(&new, old, "{f} changed across regeneration");
    }
}

#[test]
fn run_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "run",
        "--agent",
        "reco_powerline",
        "--opponent",
        "weighted_random",
        "--seed",
        "3",
        "--stride",
        "48",
    ];
    let mut all = |out_dir: &str| {
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--out", out_dir]);
        let out = advgrid(&full, dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut dump = Vec::new();
        for sub in ["episodes", "eval", "report"] {
            let mut paths: Vec<_> = std::fs::read_dir(dir.path().join(out_dir).join(sub))
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            paths.sort();
            for p in paths {
                dump.push((p.file_name().unwrap().to_owned(), std::fs::read(&p).unwrap()));
            }
        }
        dump
    };
    assert_eq!(all("a"), all("b"));
}

#[test]
fn evaluate_and_score_work_on_run_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = advgrid(
        &["gen-chronics", "--out", "chron", "--count", "1", "--days", "1"],
        dir.path(),
    );
    assert!(out.status.success());
    let config = serde_json::json!({
        "chronics": {"files": {"files": ["chron/gen-0.csv"]}},
        "agents": [{"kind": "reco_powerline"}],
        "opponent": {"kind": "do_nothing"},
        "seeds": [0],
        "stride": 12,
        "out": "run1"
    });
    std::fs::write(dir.path().join("config.json"), config.to_string()).unwrap();
    let out = advgrid(&["run", "--config", "config.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let episode = "run1/episodes/reco_powerline__gen-0__0.jsonl";
    let anchor = "run1/episodes/do_nothing__gen-0__0.jsonl";
    let out = advgrid(
        &["evaluate", "--episode", episode, "--chronics", "chron/gen-0.csv", "--stride", "12"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("t,S_1,"));

    let out = advgrid(&["score", "--episode", episode, "--anchor", anchor], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let score: f64 = stdout(&out).trim().parse().unwrap();
    assert!((-100.0..=100.0).contains(&score));

    // The anchor scores itself as exactly zero.
    let out = advgrid(&["score", "--episode", anchor, "--anchor", anchor], dir.path());
    assert!(out.status.success());
    let score: f64 = stdout(&out).trim().parse().unwrap();
    assert!(score.abs() < 1e-9);
}
