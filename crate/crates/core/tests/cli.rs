use std::path::Path;
use std::process::{Command, Output};

use veil::data::synthetic_regression;
use veil::io::{write_csv, LatentBatchFile};
use veil::numeric::Rng;
use veil::scrae::LatentBatch;

fn veil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_veil")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const REGRESSION_CONFIG: &str = r#"{
    "data": {"target": "y", "task": "regression", "validation_fraction": 0.2, "split_seed": 1},
    "encoder": {"widths": [64, 16], "activation": "tanh"},
    "train": {"repr_loss": "r_nce", "epochs": 20, "learning_rate": 0.003, "sigma_auto": true, "seed": 3}
}"#;

#[test]
fn train_encode_diagnose_attack_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("reg.csv");
    let cfg = dir.path().join("run.json");
    let model = dir.path().join("model.veil");
    let ds = synthetic_regression(5000, 100, 0.1, 7);
    let names: Vec<String> = (0..100).map(|i| format!("f{i}")).collect();
    write_csv(&data, &names, &ds.x, Some(("y", ds.targets.values().unwrap().data()))).unwrap();
    std::fs::write(&cfg, REGRESSION_CONFIG).unwrap();

    let o = veil(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&model)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["downstream_validation_metric"].as_f64().unwrap() > 0.9, "{summary}");
    assert!(dir.path().join("model.veil.training.csv").exists());
    assert!(dir.path().join("model.veil.downstream.json").exists());

    let lat = dir.path().join("z.ical");
    let o = veil(&["encode", "--model", p(&model), "--data", p(&data), "--out", p(&lat)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::metadata(&lat).unwrap().len() as usize, 20 + 4 * 5000 * 16 + 8 * 5000);
    let file = LatentBatchFile::read(&lat).unwrap();
    assert_eq!(file.targets.as_deref(), Some(ds.targets.values().unwrap().data()));

    let diag = dir.path().join("diag.json");
    let o = veil(&["diagnose", "--model", p(&model), "--data", p(&data), "--out", p(&diag)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d: serde_json::Value = serde_json::from_slice(&std::fs::read(&diag).unwrap()).unwrap();
    assert!(d["spearman_rho"].as_f64().unwrap() > 0.5);

    let o = veil(&["attack", "structural", "--model", p(&model), "--data", p(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let report = dir.path().join("recon.json");
    let o = veil(&["attack", "reconstruct", "--model", p(&model), "--data", p(&data), "--out", p(&report)]);
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(code(&o), 0, "{r}");
    assert_eq!(r["verdict"], "no_leak");
}

#[test]
fn identity_latents_exit_with_the_leak_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("raw.csv");
    let lat = dir.path().join("id.ical");
    let cfg = dir.path().join("run.json");
    let x = Rng::new(4).normal_matrix(600, 6);
    let names: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
    write_csv(&data, &names, &x, None).unwrap();
    LatentBatchFile::new(LatentBatch::from_matrix(&x), None).unwrap().write(&lat).unwrap();
    std::fs::write(
        &cfg,
        r#"{"data": {"task": "regression"}, "encoder": {"widths": [2], "activation": "tanh"},
            "attacks": {"reconstruction": {"learning_rate": 0.01}}}"#,
    )
    .unwrap();
    let o = veil(&["attack", "reconstruct", "--latents", p(&lat), "--data", p(&data), "--config", p(&cfg)]);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(code(&o), 2, "{r}");
    assert!(r["advantage"].as_f64().unwrap() >= 0.9);
}

#[test]
fn bad_inputs_fail_with_usable_messages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"data": {"task": "regression", "target": "y"}, "encoder": {"widths": [4], "activation": "tanh"}, "tran": {}}"#).unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "a,b,y\n1,2,3\n4,oops,6\n").unwrap();
    let out = dir.path().join("m.veil");

    let o = veil(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&out)]);
    assert_eq!(code(&o), 64);
    assert!(String::from_utf8_lossy(&o.stderr).contains("tran"));

    std::fs::write(
        &cfg,
        r#"{"data": {"task": "regression", "target": "y", "validation_fraction": 2},
            "encoder": {"widths": [4], "activation": "tanh"}, "train": {"batch_size": 0, "epochs": 1}}"#,
    )
    .unwrap();
    std::fs::write(&data, "a,b,y\n1,2,3\n4,5,6\n").unwrap();
    let o = veil(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&out)]);
    assert_eq!(code(&o), 64);
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(err.contains("validation_fraction") && err.contains("batch_size") && err.contains("encoder:"), "{err}");

    std::fs::write(&data, "a,b,y\n1,2,3\n4,oops,6\n").unwrap();
    std::fs::write(&cfg, r#"{"data": {"task": "regression", "target": "y"}, "encoder": {"widths": [1], "activation": "tanh"}}"#).unwrap();
    let o = veil(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&out)]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(err.contains("row 2") && err.contains("column b"), "{err}");
}
