//! End-to-end runs of the `econformal` binary.

use std::path::Path;
use std::process::{Command, Output};

fn econformal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_econformal")).args(args).output().expect("run econformal")
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn baseline_prints_threshold_and_set() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.csv", "score\n3\n1\n2\n");
    let r = write(d.path(), "r.csv", "label,score\n0,1.5\n1,2.5\n");
    let out = econformal(&["baseline", "--alpha", "0.5", "--calib", &c, "--row", &r]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["set"], serde_json::json!(["0"]));
    assert_eq!(v["threshold"]["value"], serde_json::json!(2.0));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let r = write(d.path(), "r.csv", "label,score\n0,1.5\n");
    let out = econformal(&["baseline", "--alpha", "0.5", "--calib", "/no/such.csv", "--row", &r]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such.csv"));
    assert_eq!(econformal(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(econformal(&["--help"]).status.code(), Some(0));
}

#[test]
fn bav_writes_path_and_summary() {
    let d = tempfile::tempdir().unwrap();
    let s = write(
        d.path(),
        "s.csv",
        "batch_id,role,score\n1,calib,1\n1,calib,2\n1,calib,3\n1,test,2.5\n2,calib,1\n2,calib,1\n2,test,0.5\n",
    );
    let path = d.path().join("path.csv");
    let summary = d.path().join("summary.json");
    let out = econformal(&[
        "bav",
        "--alpha",
        "0.5",
        "--stream",
        &s,
        "--strategy",
        "grapa",
        "--out",
        path.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(path).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(summary).unwrap()).unwrap();
    assert_eq!(v["batches"], serde_json::json!(2));
}

#[test]
fn posthoc_selection_respects_target() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.csv", &(1..=50).fold(String::from("score\n"), |s, i| s + &format!("{}\n", i as f64 / 10.0)));
    let r = write(d.path(), "r.csv", "label,score\na,0.2\nb,1.0\nc,3.0\nd,6.0\ne,9.0\nf,20.0\n");
    let profile = d.path().join("profile.csv");
    let out = econformal(&[
        "posthoc",
        "--C",
        "5",
        "--grid",
        "0.01:0.30:0.01",
        "--calib",
        &c,
        "--row",
        &r,
        "--profile-out",
        profile.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["achieved_size"].as_u64().unwrap() <= 5);
    assert_eq!(v["set"].as_array().unwrap().len() as u64, v["achieved_size"].as_u64().unwrap());
    let rows = std::fs::read_to_string(profile).unwrap();
    assert_eq!(rows.lines().next(), Some("alpha,set_size"));
    assert_eq!(rows.lines().count(), 31);
}

#[test]
fn mccp_single_expert_is_one_rank_below_baseline() {
    let d = tempfile::tempdir().unwrap();
    let e = write(d.path(), "e.csv", "expert_1,expert_2\n1,5\n2,6\n3,7\n4,8\n");
    let c = write(d.path(), "c.csv", "score\n1\n2\n3\n4\n");
    let r = write(d.path(), "r.csv", "label,score\na,1.5\nb,2.5\nc,3.5\n");
    let mc = econformal(&["mccp", "--alpha", "0.5", "--experts", &e, "--row", &r, "--m", "1"]);
    assert_eq!(mc.status.code(), Some(0));
    let mc: serde_json::Value = serde_json::from_slice(&mc.stdout).unwrap();
    let base = econformal(&["baseline", "--alpha", "0.5", "--calib", &c, "--row", &r]);
    let base: serde_json::Value = serde_json::from_slice(&base.stdout).unwrap();
    // baseline: 3rd smallest of 4; single-expert p-variant: 2nd smallest
    assert_eq!(base["threshold"]["value"], serde_json::json!(3.0));
    assert_eq!(mc["p_variant"]["threshold"]["value"], serde_json::json!(2.0));
    assert_eq!(mc["m"], serde_json::json!(1));
}

#[test]
fn simulate_csv_and_files() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("r.csv");
    let run = econformal(&[
        "simulate",
        "single-block",
        "--n",
        "20",
        "--seed",
        "5",
        "--reps",
        "100",
        "--format",
        "csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(0));
    let csv = std::fs::read_to_string(out).unwrap();
    assert_eq!(csv.lines().next(), Some("method,field,key,value"));
    assert!(csv.contains("single_block_e") && csv.contains("single_block_p"));
    assert_eq!(csv.matches("method,field,key,value").count(), 1);
}
