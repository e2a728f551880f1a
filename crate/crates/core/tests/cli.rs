use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn chirp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chirp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"]["kind"].as_str().unwrap().to_owned()
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = chirp(dir.path(), &["pipeline-cpr", "--scenario", "scenario.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "usage");
    assert!(String::from_utf8_lossy(&out.stderr).contains("--k"));
}

#[test]
fn failures_report_json_and_leave_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = chirp(dir.path(), &["cluster", "--matrix", "absent.csv", "--k", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "io");

    fs::write(dir.path().join("v.json"), r#"[{"goal":[2,2],"start":[5,5]},{"goal":[9,9],"start":[5,5]}]"#).unwrap();
    let ok = chirp(dir.path(), &["--out-dir", "o", "chirp", "exact", "--variants", "v.json"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    // k larger than the matrix fails after the output directory exists
    let bad = chirp(dir.path(), &["--out-dir", "p", "cluster", "--matrix", "o/matrix.csv", "--k", "3"]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(error_kind(&bad), "config");
    assert!(fs::read_dir(dir.path().join("p")).unwrap().next().is_none());

    let slippery = r#"[{"goal":[2,2],"start":[5,5],"slip":0.1},{"goal":[9,9],"start":[5,5]}]"#;
    fs::write(dir.path().join("s.json"), slippery).unwrap();
    let bad = chirp(dir.path(), &["--out-dir", "q", "chirp", "exact", "--variants", "s.json"]);
    assert_eq!(error_kind(&bad), "exactness_unavailable");
    assert!(fs::read_dir(dir.path().join("q")).unwrap().next().is_none());
}

#[test]
fn small_studies_are_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let out = chirp(dir.path(), &["--seed", "1", "study-simplegrid", "--n-pairs", "30", "--permutations", "200", "--bins", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["small_sample"], true);
    assert_eq!(report["correlation"]["n"], 30);
    let curve: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("curve.json")).unwrap()).unwrap();
    assert_eq!(curve["degree"], 3);
    let pairs = fs::read_to_string(dir.path().join("pairs.csv")).unwrap();
    assert!(pairs.starts_with("pair_id,chirp,sopr\n"));
    assert_eq!(pairs.lines().count(), 31);
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = r#"{"tasks":[{"goal":[3,3],"start":[9,9]},{"goal":[4,2],"start":[9,9]},{"goal":[16,16],"start":[9,9]},
        {"goal":[15,17],"start":[9,9]}],"change_prob":0.1,"total_episodes":300,"horizon":80,"eval_window":50}"#;
    fs::write(dir.path().join("scenario.json"), scenario).unwrap();
    let out = chirp(dir.path(), &["pipeline-cpr", "--scenario", "scenario.json", "--k", "2", "--seeds", "0,1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cmp: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("comparison.json")).unwrap()).unwrap();
    assert_eq!(cmp["task_to_policy"], serde_json::json!([0, 0, 1, 1]));
    for s in cmp["strategies"].as_array().unwrap() {
        assert_eq!(s["runs"].as_array().unwrap().len(), 2);
    }
    let assignment: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("assignment.json")).unwrap()).unwrap();
    assert_eq!(assignment["labels"].as_object().unwrap().len(), 4);
    assert!(dir.path().join("runlogs/lpr_seed1.csv").exists());
    let log = fs::read_to_string(dir.path().join("runlogs/cpr_seed0.csv")).unwrap();
    assert!(log.starts_with("episode,task_id,policy_id,success,return\n"));
}
