use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn chartseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chartseq")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = chartseq(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn build_space(dir: &Path) -> PathBuf {
    let space = dir.join("space.json");
    let summary: Value = serde_json::from_slice(&ok(&[
        "build-space",
        "--schema",
        p(&data("schema.cars.json")),
        "--config",
        p(&data("reference_space.config.json")),
        "--out",
        p(&space),
    ]))
    .unwrap();
    let golden: Value = serde_json::from_slice(&std::fs::read(data("golden/reference_space.counts.json")).unwrap()).unwrap();
    assert_eq!(summary["states"], golden["states"]);
    assert_eq!(summary["edges"], golden["edges"]);
    space
}

const SOURCE: &str = r#"{"mark":"bar","channels":{"x":{"field":{"name":"Horsepower","kind":"quantitative"}}},"filter":false}"#;
const FOUR: &str = r#"[{"kind":"add-field","channel":"y","field":{"name":"Cylinders","kind":"ordinal"}},{"kind":"add-sort","channel":"x"},{"kind":"add-filter"},{"kind":"change-mark","mark":"line"}]"#;

#[test]
fn pipeline_on_the_sample_data() {
    let dir = tempfile::tempdir().unwrap();
    let space = build_space(dir.path());
    let model = dir.path().join("cluster.json");
    let summary: Value = serde_json::from_slice(&ok(&[
        "train",
        "--space",
        p(&space),
        "--demos",
        p(&data("demos.sample.jsonl")),
        "--task",
        "cluster",
        "--out",
        p(&model),
    ]))
    .unwrap();
    assert_eq!(summary["converged"], true);
    assert!(summary["final_gradient_norm"].as_f64().unwrap() < 1e-5);
    let file: Value = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
    assert!(file["theta"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap().is_finite()));
    // the shipped model came from the same command
    let shipped: Value = serde_json::from_slice(&std::fs::read(data("models/cluster.json")).unwrap()).unwrap();
    assert_eq!(file, shipped);

    let recs: Value =
        serde_json::from_slice(&ok(&["recommend", "--space", p(&space), "--model", p(&model), "--state", SOURCE])).unwrap();
    assert_eq!(recs["state"], serde_json::from_str::<Value>(SOURCE).unwrap());
    let scores: Vec<f64> = recs["recommendations"].as_array().unwrap().iter().map(|r| r["score"].as_f64().unwrap()).collect();
    assert_eq!(scores.len(), 10);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    let ranked: Value = serde_json::from_slice(&ok(&[
        "rank", "--space", p(&space), "--model", p(&model), "--source", SOURCE, "--actions", FOUR,
    ]))
    .unwrap();
    let ranked = ranked.as_array().unwrap();
    assert_eq!(ranked.len(), 24);
    assert_eq!(ranked[0]["rank"], 1);
    assert_eq!(ranked[0]["steps"].as_array().unwrap().len(), 9);

    let seq: Value = serde_json::from_slice(&ok(&[
        "sequence", "--space", p(&space), "--model", p(&model), "--state", SOURCE, "--max-steps", "3",
    ]))
    .unwrap();
    assert_eq!(seq["steps"].as_array().unwrap().len(), 7);
}

#[test]
fn eval_on_planted_ratings_reports_a_perfect_full_row() {
    let dir = tempfile::tempdir().unwrap();
    let space = build_space(dir.path());
    let models: Vec<String> = ["anomaly", "cluster", "correlation"].iter().map(|t| p(&data(&format!("models/{t}.json"))).to_string()).collect();
    let mut args = vec!["eval", "--space", p(&space)];
    for m in &models {
        args.extend(["--model", m.as_str()]);
    }
    let items = data("rank_items.sample.json");
    let ratings = data("ratings.planted.csv");
    args.extend(["--items", p(&items), "--ratings", p(&ratings)]);
    let out = chartseq(&args);
    assert!(out.status.success());
    let result: Value = serde_json::from_slice(&out.stdout).unwrap();
    for table in result["per_task"].as_object().unwrap().values().chain([&result["pooled"]]) {
        let rows = table["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0]["kendall_tau_b"], 1.0);
        assert_eq!(rows[0]["spearman_rho"], 1.0);
    }
    assert_eq!(result["pooled"]["items"], 72);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Kendall tau_b"));
}

#[test]
fn demo_gen_is_seeded_and_labeled_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let space = build_space(dir.path());
    let planted = data("planted_theta.json");
    let gen = |seed: &str| ok(&["--seed", seed, "demo-gen", "--space", p(&space), "--planted", p(&planted), "--task", "anomaly"]);
    let a = gen("3");
    assert_eq!(a, gen("3"));
    assert_ne!(a, gen("4"));
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().all(|l| l.contains("synthetic")));
    // the shipped corpus is reproducible from its recorded seed
    let shipped = ok(&[
        "--seed", "10", "demo-gen", "--space", p(&space), "--planted", p(&planted), "--length", "6",
    ]);
    assert_eq!(shipped, std::fs::read(data("demos.sample.jsonl")).unwrap());
}

#[test]
fn bad_input_exits_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = chartseq(&["train", "--space", p(&missing), "--demos", p(&missing), "--task", "cluster"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let space = build_space(dir.path());
    let model = data("models/cluster.json");
    let out = chartseq(&["recommend", "--space", p(&space), "--model", p(&model), "--k", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = chartseq(&["train", "--space", p(&space), "--demos", p(&data("demos.sample.jsonl")), "--task", "sorting"]);
    assert_ne!(out.status.code(), Some(0));

    let out = chartseq(&["rank", "--space", p(&space), "--model", p(&model), "--source", SOURCE, "--actions", "[1"]);
    assert_eq!(out.status.code(), Some(2));
}
