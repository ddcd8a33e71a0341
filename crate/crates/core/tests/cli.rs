use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qgraph(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qgraph"))
        .args(args)
        .current_dir(dir)
        .env_remove("QGRAPH_THREADS")
        .output()
        .expect("run qgraph")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = qgraph(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const QUICK: [&str; 4] = ["--epochs", "40", "--realizations", "5"];

fn with_quick<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(QUICK).collect()
}

fn spirals(dir: &Path, n: &str) {
    ok(dir, &["gen-data", "two-spirals", "--n", n, "--seed", "7", "-o", "d.csv"]);
}

#[test]
fn gen_data_writes_rows_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    spirals(dir.path(), "100");
    let text = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert_eq!(text.lines().count(), 200);
    assert!(text.lines().all(|l| l.split(',').count() == 3));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("d.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "gen-data");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_output_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = qgraph(dir.path(), &["gen-data", "two-spirals", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn build_graph_honours_grid_and_realizations() {
    let dir = tempfile::tempdir().unwrap();
    spirals(dir.path(), "30");
    let args = [
        "build-graph", "--input", "d.csv", "--taus", "0.1,0.5,0.9", "--R", "1", "--epochs", "40", "--out-dir", "g",
    ];
    ok(dir.path(), &args);
    let g = dir.path().join("g");
    let decay = fs::read_to_string(g.join("decay.csv")).unwrap();
    assert_eq!(decay.lines().count(), 4, "header plus one row per tau:\n{decay}");
    for f in ["scales.csv", "affinity.csv", "edges.csv", "manifest.json"] {
        assert!(g.join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(g.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["realizations"], 1);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);
    let affinity = fs::read_to_string(g.join("affinity.csv")).unwrap();
    assert_eq!(affinity.lines().count(), 60);
}

#[test]
fn build_graph_json_affinity() {
    let dir = tempfile::tempdir().unwrap();
    spirals(dir.path(), "15");
    ok(dir.path(), &with_quick(&["build-graph", "--input", "d.csv", "--format", "json", "--out-dir", "g"]));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("g/affinity.json")).unwrap()).unwrap();
    assert_eq!(v["n"], 30);
    assert_eq!(v["rows"].as_array().unwrap().len(), 30);
}

#[test]
fn cluster_reports_nmi_only_with_labels() {
    let dir = tempfile::tempdir().unwrap();
    spirals(dir.path(), "30");
    let labelled = ok(dir.path(), &with_quick(&["cluster", "--input", "d.csv", "--classes", "2", "--seed", "7"]));
    let v: serde_json::Value = serde_json::from_str(&labelled).unwrap();
    let score = v["nmi"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&score));

    let unlabelled = ok(
        dir.path(),
        &with_quick(&["cluster", "--input", "d.csv", "--labels", "none", "--classes", "2", "--out-dir", "c"]),
    );
    let v: serde_json::Value = serde_json::from_str(&unlabelled).unwrap();
    assert!(v.get("nmi").is_none());
    assert_eq!(fs::read_to_string(dir.path().join("c/assignments.csv")).unwrap().lines().count(), 61);
}

#[test]
fn cluster_from_precomputed_graph() {
    let dir = tempfile::tempdir().unwrap();
    spirals(dir.path(), "20");
    ok(dir.path(), &with_quick(&["build-graph", "--input", "d.csv", "--out-dir", "g"]));
    let out = ok(dir.path(), &["cluster", "--graph", "g/affinity.csv", "--classes", "2"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["method"], "precomputed");
    assert_eq!(v["n_clusters"], 2);
}

#[test]
fn propagate_with_seed_file_and_trials() {
    let dir = tempfile::tempdir().unwrap();
    spirals(dir.path(), "20");
    fs::write(dir.path().join("seeds.csv"), "index,class\n0,0\n25,1\n").unwrap();
    let out = ok(
        dir.path(),
        &with_quick(&["propagate", "--input", "d.csv", "--seeds-file", "seeds.csv", "--out-dir", "p"]),
    );
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["maxwalk"], 5);
    assert!(v["accuracy"].as_f64().is_some());
    let pred = fs::read_to_string(dir.path().join("p/predictions.csv")).unwrap();
    assert_eq!(pred.lines().count(), 41);
    assert!(pred.contains("\n25,1\n"));

    let out = ok(dir.path(), &with_quick(&["propagate", "--input", "d.csv", "--trials", "3", "--seed", "7"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["trial_accuracies"].as_array().unwrap().len(), 3);
}

#[test]
fn malformed_seed_file_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    spirals(dir.path(), "10");
    fs::write(dir.path().join("seeds.csv"), "0,0\nseven,1\n").unwrap();
    let out = qgraph(dir.path(), &["propagate", "--input", "d.csv", "--seeds-file", "seeds.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
}

#[test]
fn runtime_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = qgraph(dir.path(), &["build-graph", "--input", "absent.csv", "--out-dir", "g"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn noise_study_emits_twelve_rows() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "noise-study", "--n", "15", "--repeats", "1", "--epochs", "20", "--realizations", "3", "-o", "noise.csv",
    ];
    ok(dir.path(), &args);
    let text = fs::read_to_string(dir.path().join("noise.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "method,sigma_noise,fraction,nmi");
    assert_eq!(rows.len(), 13);
    assert_eq!(rows.iter().filter(|r| r.starts_with("local-scaling-k7,")).count(), 6);
}
