use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subcluster"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

const CONFIG: &str = r#"{
  "name": "cli",
  "dataset": {"kind": "synthetic", "components": [
    {"mean": [-1.0, 0.0], "std_dev": [0.2, 0.2], "count": 100, "class_id": 0},
    {"mean": [1.0, 0.0], "std_dev": [0.2, 0.2], "count": 100, "class_id": 1},
    {"mean": [0.0, 2.0], "std_dev": [0.2, 0.2], "count": 40, "class_id": 2}
  ]},
  "protocol": {"normal_classes": [0, 1], "anomaly_classes": [2]},
  "clustering": {"method": "kmeans", "k_list": [2, 3]},
  "hidden_dims": [8],
  "train": {"epochs": 5, "batch_size": 32},
  "detectors": [{"kind": "msp"}, {"kind": "kl"}],
  "seed": 1
}"#;

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn run_writes_results_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.json"), CONFIG).unwrap();
    let o = bin(
        &["run", "--config", "exp.json", "--out", "res", "--seed", "9"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/results.csv")).unwrap();
    assert!(csv.starts_with("seed,k,method,auroc,n_normal,n_anomaly\n9,2,MAX,"));
    assert_eq!(csv.lines().count(), 5);
    assert!(dir.path().join("res/manifest.json").is_file());
    assert!(String::from_utf8_lossy(&o.stdout).contains("MAX"));

    let o = bin(
        &["eval", "--scores", "res/scores/seed9_k2.csv", "--out", "ev"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eval = std::fs::read_to_string(dir.path().join("ev/eval.csv")).unwrap();
    let (results_auroc, eval_auroc) = (
        csv.lines().nth(1).unwrap().split(',').nth(3).unwrap().to_string(),
        eval.lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string(),
    );
    assert_eq!(results_auroc, eval_auroc);
    assert!(dir.path().join("ev/roc_MAX.csv").is_file());
}

#[test]
fn sweep_writes_plot() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.json"), CONFIG).unwrap();
    let o = bin(&["sweep", "--config", "exp.json", "--out", "sw"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("sw/sweep.svg").is_file());
    assert!(dir.path().join("sw/sweep.csv").is_file());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("k1.json"), CONFIG.replace("[2, 3]", "[1]")).unwrap();
    assert_eq!(code(&bin(&["run", "--config", "k1.json"], p)), 2);
    std::fs::write(p.join("garbage.json"), "{ not json").unwrap();
    assert_eq!(code(&bin(&["run", "--config", "garbage.json"], p)), 2);
    assert_eq!(code(&bin(&["frobnicate"], p)), 2);

    let mut missing: serde_json::Value = serde_json::from_str(CONFIG).unwrap();
    missing["dataset"] = serde_json::json!({"kind": "csv", "path": "nope.csv", "label_column": "y"});
    std::fs::write(p.join("missing.json"), missing.to_string()).unwrap();
    let o = bin(&["run", "--config", "missing.json", "--out", "m"], p);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    std::fs::write(
        p.join("diverge.json"),
        CONFIG.replace(r#""epochs": 5"#, r#""epochs": 5, "lr0": 1e9"#),
    )
    .unwrap();
    let o = bin(&["run", "--config", "diverge.json", "--out", "d"], p);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
}

#[test]
fn knn_score_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("ref.csv"), "a,b\n1,0\n0.9,0.1\n1.1,-0.1\n").unwrap();
    std::fs::write(p.join("test.csv"), "a,b,role\n1,0.05,normal\n-1,0,anomaly\n").unwrap();
    std::fs::write(
        p.join("knn.json"),
        r#"{"reference": "ref.csv", "test": "test.csv", "k_list": [1, 3]}"#,
    )
    .unwrap();
    let o = bin(&["knn-score", "--config", "knn.json", "--out", "k"], p);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(p.join("k/knn_results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(2) == Some("1")));

    std::fs::write(
        p.join("big.json"),
        r#"{"reference": "ref.csv", "test": "test.csv", "k_list": [4]}"#,
    )
    .unwrap();
    assert_eq!(code(&bin(&["knn-score", "--config", "big.json"], p)), 2);
}
