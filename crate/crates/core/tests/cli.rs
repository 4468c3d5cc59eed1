use std::fs::File;
use std::io::BufReader;
use std::process::Command;

use vrsgd::dataset::load_libsvm;
use vrsgd::harness::emit::read_trace_csv;

fn vrsgd(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_vrsgd")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn gen_data_reloads_with_same_delta() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.svm");
    let p = path.to_str().unwrap();
    let (code, stdout) = vrsgd(&["gen-data", "--n", "1000", "--d", "200", "--nnz", "5", "--seed", "1", "--out", p]);
    assert_eq!(code, 0);
    let reported: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let ds = load_libsvm(BufReader::new(File::open(&path).unwrap()), Some(200)).unwrap();
    assert_eq!(ds.n(), 1000);
    assert_eq!(ds.delta(), reported["delta"].as_f64().unwrap());
}

#[test]
fn certify_prints_json_certificate() {
    let (code, stdout) = vrsgd(&["certify", "--thm", "1", "--n", "1000", "--cond", "n", "--m", "10000"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let theta = v["certificate"]["theta"].as_f64().unwrap();
    assert!(theta.is_finite());
    assert!(v["violated_conditions"].is_array());
}

#[test]
fn strict_certify_fails_when_infeasible() {
    let args = ["certify", "--thm", "2", "--n", "100", "--cond", "n", "--m", "1000", "--eta", "0.5", "--strict"];
    let (code, _) = vrsgd(&args);
    assert_eq!(code, 2);
}

#[test]
fn hsag_solve_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.svm");
    let out = dir.path().join("out");
    let (code, _) = vrsgd(&[
        "gen-data", "--n", "200", "--d", "50", "--nnz", "4", "--out", data.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (code, _) = vrsgd(&[
        "solve", "--schedule", "hsag", "--S", "0.5", "--m", "2n", "--epochs", "5",
        "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--name", "h",
    ]);
    assert_eq!(code, 0);
    let rows = read_trace_csv(File::open(out.join("trace_h.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(out.join("plan_resolved.json").exists());
}

#[test]
fn bad_flags_exit_nonzero() {
    assert_eq!(vrsgd(&["solve", "--schedule", "nope"]).0, 1);
    assert_eq!(vrsgd(&["--help"]).0, 0);
}
