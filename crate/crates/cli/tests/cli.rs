use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn clusterkv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clusterkv"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_trace(dir: &Path) {
    fs::write(
        dir.join("spec.json"),
        r#"{"prompt_len": 400, "decode_len": 24, "head_dim": 16, "n_layers": 2, "n_heads": 1, "seed": 3}"#,
    )
    .unwrap();
    let out = clusterkv(&["gen-trace", "--spec", "spec.json", "--out", "t.ckvt"], dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_writes_a_row_per_head_step() {
    let dir = tempfile::tempdir().unwrap();
    small_trace(dir.path());
    let out = clusterkv(
        &[
            "simulate",
            "--trace",
            "t.ckvt",
            "--policy",
            "clusterkv",
            "--budget",
            "64",
            "--m",
            "8",
            "--out",
            "r.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "policy,budget,layer,head,step,recall,l2_rel,cos_sim,clusters_hit,clusters_requested,tokens_transferred"
    );
    assert_eq!(lines.len(), 1 + 2 * 24);
    assert!(lines[1].starts_with("clusterkv,64,0,0,0,"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    small_trace(dir.path());
    for out in ["a.csv", "b.csv"] {
        let o = clusterkv(
            &["simulate", "--trace", "t.ckvt", "--policy", "page", "--budget", "48", "--out", out],
            dir.path(),
        );
        assert_eq!(code(&o), 0);
    }
    assert_eq!(
        fs::read(dir.path().join("a.csv")).unwrap(),
        fs::read(dir.path().join("b.csv")).unwrap()
    );
}

#[test]
fn json_reports_follow_the_extension() {
    let dir = tempfile::tempdir().unwrap();
    small_trace(dir.path());
    let o = clusterkv(
        &[
            "simulate", "--trace", "t.ckvt", "--policy", "oracle", "--budget", "32", "--out", "r.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(v["summary"]["mean_recall"], 1.0);
}

#[test]
fn sweep_writes_per_run_reports_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    small_trace(dir.path());
    let o = clusterkv(
        &[
            "sweep",
            "--trace",
            "t.ckvt",
            "--axis",
            "budget",
            "--values",
            "16,32",
            "--policies",
            "clusterkv,random",
            "--out",
            "sw",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("sw/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(dir.path().join("sw/random_budget_32.csv").exists());
}

#[test]
fn cache_bench_reports_each_retention() {
    let dir = tempfile::tempdir().unwrap();
    small_trace(dir.path());
    let o = clusterkv(
        &[
            "cache-bench",
            "--trace",
            "t.ckvt",
            "--retention-values",
            "1,2,4",
            "--budget",
            "64",
            "--async-clustering",
            "--out",
            "cb.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("cb.csv")).unwrap();
    let rates: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(7).unwrap().parse().unwrap()).collect();
    assert_eq!(rates.len(), 3);
    assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{rates:?}");
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    small_trace(dir.path());
    let cases: [&[&str]; 4] = [
        &["simulate", "--trace", "t.ckvt", "--budget", "0", "--out", "x.csv"],
        &["simulate", "--trace", "t.ckvt", "--policy", "nope", "--out", "x.csv"],
        &["sweep", "--trace", "t.ckvt", "--axis", "retention", "--values", "0", "--out", "d"],
        &["frobnicate"],
    ];
    for args in cases {
        assert_eq!(code(&clusterkv(args, dir.path())), 1, "{args:?}");
    }
    fs::write(dir.path().join("bad.json"), r#"{"n_centers": 0}"#).unwrap();
    assert_eq!(
        code(&clusterkv(&["gen-trace", "--spec", "bad.json", "--out", "y.ckvt"], dir.path())),
        1
    );
}

#[test]
fn io_and_format_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("junk.ckvt"), b"not a trace").unwrap();
    for trace in ["missing.ckvt", "junk.ckvt"] {
        let o = clusterkv(&["simulate", "--trace", trace, "--out", "x.csv"], dir.path());
        assert_eq!(code(&o), 2, "{trace}");
        assert!(String::from_utf8_lossy(&o.stderr).contains(trace));
    }
}

#[test]
fn help_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = clusterkv(&["simulate", "--help"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("--retention"));
}
