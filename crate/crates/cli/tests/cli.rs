use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wigner-lab")).args(args).output().expect("binary runs")
}

fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr has a line");
    serde_json::from_str(line).expect("stderr is a JSON record")
}

#[test]
fn wegner_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("w.csv");
    let out = cli(&[
        "wegner", "--N", "20", "--trials", "200", "--eps", "0.05,0.1,0.2,0.4", "--seed", "9", "--out-csv",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("statistic,E,scale,N,K_or_eta,estimate,stderr,trials,seed"));
    assert!(header.contains("wilson_lo") && header.contains("chain_holds"));
    assert_eq!(lines.clone().count(), 4);
    assert!(lines.all(|l| l.starts_with("wegner,")));

    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("w.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 9);
    assert_eq!(manifest["trials"], 200);
    assert_eq!(manifest["config"]["study"]["study"], "wegner");
    assert!(manifest["argv"].as_array().unwrap().iter().any(|a| a == "--eps"));
}

#[test]
fn rerun_is_byte_identical() {
    let args = ["dos", "--N", "40", "--trials", "50", "--K", "5,20", "--eta", "0.5", "--seed", "4"];
    let a = cli(&args);
    let b = cli(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = cli(&["dos", "--N", "40", "--trials", "50", "--K", "5,20", "--eta", "0.5", "--seed", "5"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn wrong_offdiagonal_variance_is_rejected() {
    let out = cli(&["wegner", "--spec", "gaussian:0.3", "--eps", "0.1", "--trials", "5"]);
    assert_eq!(out.status.code(), Some(1));
    let rec = error_record(&out);
    assert_eq!(rec["error"]["kind"], "invalid_parameter");
    assert!(rec["error"]["message"].as_str().unwrap().contains("E x_jk² = 1/2"));
}

#[test]
fn discrete_law_is_refused_by_invmom() {
    let out = cli(&["invmom", "--law", "bernoulli:0.5", "--samples", "10"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"]["kind"], "no_density");
}

#[test]
fn discrete_law_is_flagged_by_wegner() {
    let out = cli(&["wegner", "--spec", "bernoulli:0.5", "--N", "12", "--trials", "10", "--eps", "0.1"]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let warning: Value = serde_json::from_str(stderr.lines().next().unwrap()).unwrap();
    assert!(warning["warning"].as_str().unwrap().contains("has no density"));
}

#[test]
fn usage_errors_are_json() {
    let out = cli(&["wegner", "--eps", "abc"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"]["kind"], "usage");
    let out = cli(&["invmom", "--frame", "wavelet", "--samples", "10"]);
    assert_eq!(error_record(&out)["error"]["kind"], "invalid_parameter");
}

#[test]
fn gue_density_at_points() {
    let out = cli(&["gue-oracle", "--eigenvalues", "-0.5,0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let swapped = cli(&["gue-oracle", "--eigenvalues", "0.5,-0.5"]);
    assert_eq!(out.stdout, swapped.stdout);
}

#[test]
fn json_output_mirrors_rows() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("d.json");
    let out = cli(&["deloc", "--N", "60", "--trials", "5", "--p", "inf", "--out-json", json.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert!(dir.path().join("d.json.manifest.json").exists());
}
