use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn msood(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msood")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_spec(dir: &Path, spec: Value) -> PathBuf {
    let path = dir.join("spec.json");
    fs::write(&path, spec.to_string()).unwrap();
    path
}

fn fixture(dir: &Path, spec: Option<Value>) -> PathBuf {
    let bundle = dir.join("bundle");
    let mut args = vec!["fixture".to_string(), "--out".into(), s(&bundle).into()];
    if let Some(spec) = spec {
        args.extend(["--spec".into(), s(&write_spec(dir, spec)).into()]);
    }
    let out = Command::new(env!("CARGO_BIN_EXE_msood")).args(&args).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    bundle
}

fn score_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.contains("__") && n.ends_with(".msob"))
        .collect();
    names.sort();
    names
}

fn reports(dir: &Path) -> Vec<Value> {
    serde_json::from_str::<Value>(&fs::read_to_string(dir.join("reports.json")).unwrap())
        .unwrap()
        .as_array()
        .unwrap()
        .clone()
}

fn sood_fprs(report: &Value) -> Vec<Value> {
    report["sood"].as_array().unwrap().iter().map(|s| s["fpr"].clone()).collect()
}

fn nearly_perfect_spec(cood: bool) -> Value {
    let mut spec = serde_json::to_value(msood::fixtures::FixtureSpec::small(3)).unwrap();
    spec["separation"] = 6.0.into();
    spec["noise"] = 0.05.into();
    if !cood {
        spec["cood"] = Value::Array(vec![]);
    }
    spec
}

#[test]
fn validate_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = fixture(tmp.path(), None);
    assert_eq!(code(&msood(&["validate", s(&bundle)])), 0);

    let missing = tmp.path().join("nowhere");
    let out = msood(&["validate", s(&missing)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest not found"));

    let logits = bundle.join("id.logits.msob");
    let mut bytes = fs::read(&logits).unwrap();
    bytes[0] = b'X';
    fs::write(&logits, bytes).unwrap();
    assert_eq!(code(&msood(&["validate", s(&bundle)])), 1);
}

#[test]
fn score_writes_one_table_per_method_and_partition() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = fixture(tmp.path(), None);

    let msp = tmp.path().join("msp");
    assert_eq!(code(&msood(&["score", s(&bundle), "--methods", "msp", "--out", s(&msp)])), 0);
    assert_eq!(score_files(&msp), ["msp__cood.msob", "msp__id.msob", "msp__sood.msob"]);

    let all = tmp.path().join("all");
    assert_eq!(code(&msood(&["score", s(&bundle), "--methods", "all", "--out", s(&all)])), 0);
    assert_eq!(score_files(&all).len(), 18);

    let again = tmp.path().join("again");
    assert_eq!(code(&msood(&["score", s(&bundle), "--methods", "all", "--out", s(&again)])), 0);
    let mut names: Vec<_> = fs::read_dir(&all).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names {
        assert_eq!(fs::read(all.join(&name)).unwrap(), fs::read(again.join(&name)).unwrap(), "{name:?}");
    }

    assert_eq!(code(&msood(&["score", s(&bundle), "--methods", "react"])), 2);
    assert_eq!(code(&msood(&["score", s(&bundle), "--energy-temperature", "0"])), 2);
}

#[test]
fn perfect_classifier_makes_msood_match_conventional() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = fixture(tmp.path(), Some(nearly_perfect_spec(true)));
    let scores = tmp.path().join("scores");
    let out = tmp.path().join("eval");
    assert_eq!(code(&msood(&["score", s(&bundle), "--out", s(&scores)])), 0);
    let run =
        msood(&["eval", s(&bundle), "--scores", s(&scores), "--frameworks", "msood,conventional", "--out", s(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));

    let reports = reports(&out);
    assert_eq!(reports.len(), 12);
    for pair in reports.chunks(2) {
        assert_eq!(pair[0]["framework"], "msood");
        assert_eq!(pair[1]["framework"], "conventional");
        assert_eq!(pair[0]["id"]["fpr_id_neg"]["total"], 0, "fixture is not perfectly classified");
        assert_eq!(pair[0]["threshold"], pair[1]["threshold"]);
        assert_eq!(sood_fprs(&pair[0]), sood_fprs(&pair[1]));
    }
    for file in ["metrics.csv", "paired.json", "paired.csv"] {
        assert!(out.join(file).is_file(), "{file}");
    }
}

#[test]
fn full_target_accepts_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = fixture(tmp.path(), None);
    let scores = tmp.path().join("scores");
    let out = tmp.path().join("eval");
    assert_eq!(code(&msood(&["score", s(&bundle), "--methods", "msp,energy", "--out", s(&scores)])), 0);
    assert_eq!(code(&msood(&["eval", s(&bundle), "--scores", s(&scores), "--target-tpr", "1.0", "--out", s(&out)])), 0);
    for r in reports(&out) {
        assert_eq!(r["threshold"], "-inf");
        for fpr in sood_fprs(&r) {
            assert_eq!(fpr["rate"], 1.0);
        }
        assert_eq!(r["cood"][0]["fpr_cood_neg"]["rate"], 1.0);
    }
    assert_eq!(code(&msood(&["eval", s(&bundle), "--scores", s(&scores), "--target-tpr", "1.5"])), 2);
}

#[test]
fn framework_prerequisites_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = fixture(tmp.path(), Some(nearly_perfect_spec(false)));
    let scores = tmp.path().join("scores");
    assert_eq!(code(&msood(&["score", s(&bundle), "--methods", "mls", "--out", s(&scores)])), 0);
    for fw in ["sem", "godin"] {
        let out =
            msood(&["eval", s(&bundle), "--scores", s(&scores), "--frameworks", fw, "--out", s(&tmp.path().join(fw))]);
        assert_eq!(code(&out), 2, "{fw}");
    }
    let out = tmp.path().join("scod");
    assert_eq!(
        code(&msood(&["eval", s(&bundle), "--scores", s(&scores), "--frameworks", "scod", "--out", s(&out)])),
        0
    );
    assert_eq!(code(&msood(&["eval", s(&bundle), "--scores", s(&tmp.path().join("none"))])), 2);
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = fixture(tmp.path(), None);
    let output_dir = tmp.path().join("run");
    let config = tmp.path().join("run.json");
    let body = serde_json::json!({
        "bundle": bundle,
        "methods": ["msp", "mls"],
        "frameworks": ["msood", "scod"],
        "target_tpr": 0.9,
        "output_dir": output_dir,
    });
    fs::write(&config, body.to_string()).unwrap();
    let c = s(&config);

    assert_eq!(code(&msood(&["--config", c, "score"])), 0);
    assert_eq!(score_files(&output_dir.join("scores")).len(), 6);
    assert_eq!(code(&msood(&["--config", c, "eval", "--target-tpr", "0.8"])), 0);
    let reports = reports(&output_dir);
    assert_eq!(reports.len(), 4);
    assert!(reports.iter().all(|r| r["target_tpr"] == 0.8));

    fs::write(&config, r#"{"taget_tpr": 0.9}"#).unwrap();
    assert_eq!(code(&msood(&["--config", c, "eval"])), 2);
}

#[test]
fn report_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = fixture(tmp.path(), None);
    let base = tmp.path().join("run");
    let b = s(&base);
    assert_eq!(code(&msood(&["score", s(&bundle), "--methods", "msp,vim", "--output-dir", b])), 0);
    assert_eq!(code(&msood(&["eval", s(&bundle), "--frameworks", "msood,conventional", "--output-dir", b])), 0);

    let scatter = msood(&["report", "scatter", "--output-dir", b, "--framework", "msood", "--y", "f1:cood"]);
    assert_eq!(code(&scatter), 0, "{}", String::from_utf8_lossy(&scatter.stderr));
    let csv = fs::read_to_string(base.join("report/scatter.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    assert_eq!(code(&msood(&["report", "hist", "--bundle", s(&bundle), "--output-dir", b, "--bins", "20"])), 0);
    let hist: Value = serde_json::from_str(&fs::read_to_string(base.join("report/hist_vim.json")).unwrap()).unwrap();
    assert_eq!(hist["edges"].as_array().unwrap().len(), 21);

    assert_eq!(
        code(&msood(&["report", "topk", "--bundle", s(&bundle), "--output-dir", b, "--method", "msp", "--k", "3"])),
        0
    );
    assert!(base.join("report/topk_msp.csv").is_file());
    assert!(!base.join("report/topk_vim.csv").exists());

    assert_eq!(code(&msood(&["report", "scatter", "--output-dir", b, "--y", "nonsense"])), 2);
    assert_eq!(code(&msood(&["report", "hist", "--bundle", s(&bundle), "--output-dir", b, "--bins", "1"])), 2);
}
