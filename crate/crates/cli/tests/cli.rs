use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn skl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skl")).args(args).current_dir(dir).output().unwrap()
}

fn write_blobs(dir: &Path) {
    let mut text = String::from("# two clusters, one label each\n");
    for i in 0..10 {
        let x = 0.1 * i as f64;
        text.push_str(&format!("{x},0.0,{}\n", if i == 0 { "-1" } else { "?" }));
        text.push_str(&format!("{},0.0,{}\n", 10.0 + x, if i == 0 { "1" } else { "?" }));
    }
    fs::write(dir.join("pts.csv"), text).unwrap();
    fs::write(
        dir.join("cfg.json"),
        r#"{"dataset": {"path": "pts.csv", "format": "dense-csv"}, "k": 3, "algorithm": {"kind": "skl_kta"}}"#,
    )
    .unwrap();
}

#[test]
fn generates_g50c_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = skl(&["gen-g50c", "--seed", "4", "--out", "g.csv"], dir.path());
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 550);
    assert!(lines.iter().all(|l| l.split(',').count() == 51));
    let again = skl(&["gen-g50c", "--seed", "4", "--out", "h.csv"], dir.path());
    assert!(again.status.success());
    assert_eq!(text, fs::read_to_string(dir.path().join("h.csv")).unwrap());
}

#[test]
fn run_reports_predictions_in_file_order() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path());
    let out = skl(&["run", "--config", "cfg.json", "--save-model", "m.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let predicted = report["splits"][0]["predicted"].as_array().unwrap();
    assert_eq!(predicted.len(), 20);
    for (row, p) in predicted.iter().enumerate() {
        if row < 2 {
            assert!(p.is_null());
        } else {
            assert_eq!(p.as_i64().unwrap(), if row % 2 == 0 { -1 } else { 1 });
        }
    }
    assert!(report["splits"][0]["accuracy"].is_null());

    let pred = skl(&["predict", "--model", "m.json"], dir.path());
    assert!(pred.status.success());
    let text = String::from_utf8(pred.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row,label"));
    assert_eq!(lines.next(), Some("2,-1"));
    assert_eq!(lines.count(), 17);
}

#[test]
fn spectrum_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path());
    let out = skl(&["spectrum", "--config", "cfg.json"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("index,gamma,a,lambda_bar\n"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn input_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(skl(&["run", "--config", "missing.json"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("bad.json"), r#"{"k": 0}"#).unwrap();
    assert_eq!(skl(&["run", "--config", "bad.json"], dir.path()).status.code(), Some(2));
    write_blobs(dir.path());
    fs::write(
        dir.path().join("k.json"),
        r#"{"dataset": {"path": "pts.csv", "format": "dense-csv"}, "k": 20, "algorithm": {"kind": "skl_kta"}}"#,
    )
    .unwrap();
    assert_eq!(skl(&["run", "--config", "k.json"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("pts.csv"), "0,1,x\n").unwrap();
    let out = skl(&["run", "--config", "cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    assert_eq!(skl(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn degenerate_instances_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("two.csv"), "0,0\n1,1\n").unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"dataset": {"path": "two.csv", "format": "dense-csv"}, "k": 1, "algorithm": {"kind": "skl_kta"}}"#,
    )
    .unwrap();
    let out = skl(&["run", "--config", "cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("split 0"));
}
