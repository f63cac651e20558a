use std::fs;
use std::process::Command;

use fitprobe::debugger::CheckReport;

fn fitprobe(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fitprobe")).args(args).output().expect("binary runs");
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn clean_debug_exits_zero() {
    let (code, stdout, _) = fitprobe(&["debug", "--base", "ShallowFNN"]);
    assert_eq!(code, 0, "{stdout}");
}

#[test]
fn faulty_debug_exits_one_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("reports/flip");
    let (code, stdout, _) = fitprobe(&[
        "debug", "--base", "S", "--fault", "flipped-gradient", "--phases", "pre,on", "--out", stem.to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "{stdout}");
    assert!(stdout.contains("Div-Loss"));
    let json = fs::read_to_string(stem.with_extension("json")).unwrap();
    let report = CheckReport::from_json(&json).unwrap();
    assert!(report.findings.iter().any(|f| f.check.name() == "Div-Loss"));
    assert_eq!(fs::read_to_string(stem.with_extension("txt")).unwrap(), report.to_text());
}

#[test]
fn config_file_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    fs::write(
        &good,
        r#"{"schema_version": 1, "program": {"source": "base", "base": "RegrFNN"}, "dataset": {"source": "synthetic"}, "phases": ["pre_training"]}"#,
    )
    .unwrap();
    assert_eq!(fitprobe(&["debug", good.to_str().unwrap()]).0, 0);

    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        "{\"schema_version\": 1,\n \"program\": {\"source\": \"base\", \"base\": \"RegrFNN\"},\n \"dataset\": {\"source\": \"synthetic\"},\n \"periodd\": 3}",
    )
    .unwrap();
    let (code, _, stderr) = fitprobe(&["debug", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("periodd") && stderr.contains("line 4"), "{stderr}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(fitprobe(&["debug"]).0, 2);
    assert_eq!(fitprobe(&["debug", "--base", "R", "--period", "0"]).0, 2);
    assert_eq!(fitprobe(&["bench", "no-such-fault"]).0, 2);
    assert_eq!(fitprobe(&["frobnicate"]).0, 2);
    assert_eq!(fitprobe(&["--help"]).0, 0);
}

#[test]
fn bench_selector_runs_one_pair() {
    let (code, stdout, _) = fitprobe(&["bench", "low-lr/RegrFNN", "--floor", "0.5"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("low-lr"));
    assert!(!stdout.contains("high-lr"));
}

#[test]
fn timing_json_reports_a_ratio() {
    let (code, stdout, _) = fitprobe(&["timing", "R", "--json", "--phases", "pre"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(v["ratio"].as_f64().unwrap() > 0.0);
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);
}
