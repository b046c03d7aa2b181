use std::path::Path;
use std::process::{Command, Output};

fn crossgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossgp"))
        .args(args)
        .env("CROSSGP_LOG", "error")
        .output()
        .expect("spawn crossgp")
}

fn ok(args: &[&str]) -> Output {
    let out = crossgp(args);
    assert!(
        out.status.success(),
        "crossgp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_lists_subcommands() {
    let out = crossgp(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "synth",
        "ingest",
        "featurize",
        "pair",
        "train",
        "evaluate",
        "importance",
        "report",
    ] {
        assert!(text.contains(cmd), "help is missing {cmd}");
    }
}

#[test]
fn unknown_model_is_a_validation_error() {
    let out = crossgp(&[
        "train",
        "--model",
        "bogus",
        "--examples",
        "x.csv",
        "--out",
        "m.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lr, rf, gbt, crossgp"), "{err}");
}

#[test]
fn missing_flag_and_unknown_command_exit_one() {
    assert_eq!(crossgp(&["train", "--model", "lr"]).status.code(), Some(1));
    assert_eq!(crossgp(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = crossgp(&[
        "pair",
        "--features",
        "/nonexistent/features.csv",
        "--out",
        s(&dir.path().join("e.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_mix_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = crossgp(&["synth", "--mix", "0.5,0.2,0.2", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let raw = d.join("raw");
    let bundles = d.join("bundles");
    let features = d.join("features.csv");
    let examples = d.join("examples.csv");
    let runs = d.join("runs");

    ok(&[
        "synth",
        "--subjects",
        "4",
        "--days",
        "30",
        "--seed",
        "5",
        "--out",
        s(&raw),
    ]);
    ok(&[
        "ingest",
        "--cgm",
        s(&raw.join("cgm.csv")),
        "--bolus",
        s(&raw.join("bolus.csv")),
        "--meal",
        s(&raw.join("meal.csv")),
        "--out",
        s(&bundles),
        "--strict",
    ]);
    assert_eq!(
        std::fs::read_dir(&bundles)
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .path()
                    .extension()
                    .is_some_and(|x| x == "jsonl")
            })
            .count(),
        4
    );

    ok(&["featurize", "--raw", s(&bundles), "--out", s(&features)]);
    // the raw CSV directory featurizes to the same table
    let direct = d.join("direct.csv");
    ok(&["featurize", "--raw", s(&raw), "--out", s(&direct)]);
    assert_eq!(
        std::fs::read(&features).unwrap(),
        std::fs::read(&direct).unwrap()
    );

    ok(&["pair", "--features", s(&features), "--out", s(&examples)]);

    let model = runs.join("crossgp.json");
    ok(&[
        "train",
        "--model",
        "crossgp",
        "--examples",
        s(&examples),
        "--out",
        s(&model),
        "--epochs",
        "5",
        "--hidden",
        "16",
        "--seed",
        "3",
    ]);
    let report = runs.join("report.json");
    ok(&[
        "evaluate",
        "--model",
        s(&model),
        "--examples",
        s(&examples),
        "--report",
        s(&report),
    ]);

    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(json["report"], "evaluation");
    assert_eq!(json["model_kind"], "crossgp");
    for class in ["good", "moderate", "poor"] {
        for metric in ["precision", "f1", "recall"] {
            assert!(
                json["classes"][class].get(metric).is_some(),
                "{class}.{metric}"
            );
        }
    }
    assert!(json["overall"]["accuracy"].is_number());
    assert_eq!(json["confusion"].as_array().unwrap().len(), 3);

    let imp = runs.join("importance.json");
    ok(&[
        "importance",
        "--model",
        s(&model),
        "--examples",
        s(&examples),
        "--repeats",
        "3",
        "--out",
        s(&imp),
    ]);
    let native = crossgp(&[
        "importance",
        "--model",
        s(&model),
        "--examples",
        s(&examples),
        "--method",
        "native",
        "--out",
        s(&runs.join("native.json")),
    ]);
    assert_eq!(
        native.status.code(),
        Some(1),
        "network has no native importance"
    );

    let summary = d.join("summary.csv");
    ok(&["report", "--reports", s(&runs), "--out", s(&summary)]);
    let text = std::fs::read_to_string(&summary).unwrap();
    assert!(text.starts_with("source,model_kind,report,group,name,metric,value"));
    assert!(text.contains("report.json,crossgp,evaluation,overall,all,accuracy,"));
    assert!(text.contains("importance.json,crossgp,importance,permutation,tir,score,"));

    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(runs.join("crossgp-manifest.json")).unwrap())
            .unwrap();
    let entries = manifest["entries"].as_object().unwrap();
    assert_eq!(entries["crossgp.json"]["command"], "train");
    assert_eq!(entries["crossgp.json"]["seed"], 3);
    assert_eq!(entries["report.json"]["command"], "evaluate");
    assert!(raw.join("crossgp-manifest.json").is_file());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let root = d.join(run);
        let raw = root.join("raw");
        let features = root.join("features.csv");
        let examples = root.join("examples.csv");
        let model = root.join("model.json");
        let report = root.join("report.json");
        ok(&[
            "synth",
            "--subjects",
            "3",
            "--days",
            "25",
            "--seed",
            "9",
            "--out",
            s(&raw),
        ]);
        ok(&["featurize", "--raw", s(&raw), "--out", s(&features)]);
        ok(&["pair", "--features", s(&features), "--out", s(&examples)]);
        ok(&[
            "train",
            "--model",
            "rf",
            "--examples",
            s(&examples),
            "--out",
            s(&model),
            "--trees",
            "10",
            "--seed",
            "1",
        ]);
        ok(&[
            "evaluate",
            "--model",
            s(&model),
            "--examples",
            s(&examples),
            "--report",
            s(&report),
        ]);
        outputs.push([
            std::fs::read(&model).unwrap(),
            std::fs::read(&report).unwrap(),
        ]);
    }
    assert_eq!(outputs[0], outputs[1]);
}
