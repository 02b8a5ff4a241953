//! End-to-end tests of the `umset` binary: generation round trips,
//! train/eval flow, sweeps, verification, idempotence, and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn umset(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_umset"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path.display().to_string()
}

fn small_experiment_json() -> &'static str {
    r#"{
        "method": "umssc",
        "data": {"gaussian": {"dim": 2, "mean_sep": 2.0, "n_test": 400}},
        "m": 2,
        "n_tr": 200,
        "pi_d": 0.5,
        "priors": {"fixed": [0.8, 0.2]},
        "epochs": 2,
        "batch_size": 64,
        "learning_rate": 0.001,
        "hidden": [8],
        "seeds": [1, 2]
    }"#
}

#[test]
fn gen_writes_sets_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "gen.json", small_experiment_json());
    let out_dir = dir.path().join("generated");
    let output = umset(
        &["gen", "--config", &config, "--out", out_dir.to_str().unwrap()],
        &[],
    );
    assert!(output.status.success(), "{output:?}");
    assert!(out_dir.join("manifest.json").exists());
    assert!(out_dir.join("set_000.csv").exists());
    assert!(out_dir.join("set_001.csv").exists());
    assert!(out_dir.join("test.csv").exists());

    // Re-ingest through a manifest-sourced training config.
    let manifest_config = format!(
        r#"{{
            "method": "umssc",
            "data": {{"manifest": {{"path": {:?}}}}},
            "epochs": 1,
            "batch_size": 64,
            "learning_rate": 0.001,
            "hidden": [8],
            "seeds": [3]
        }}"#,
        out_dir.to_str().unwrap()
    );
    let config2 = write_config(dir.path(), "train_manifest.json", &manifest_config);
    let train_out = dir.path().join("trained");
    let output = umset(
        &[
            "train",
            "--config",
            &config2,
            "--out",
            train_out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(output.status.success(), "{output:?}");
    assert!(train_out.join("metrics.jsonl").exists());
    assert!(train_out.join("summary.csv").exists());
    assert!(train_out.join("model_seed3.json").exists());
}

#[test]
fn gen_is_idempotent_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "gen.json", small_experiment_json());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let output = umset(
            &["gen", "--config", &config, "--out", out.to_str().unwrap()],
            &[],
        );
        assert!(output.status.success());
    }
    for name in ["manifest.json", "set_000.csv", "set_001.csv", "test.csv"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical gen runs");
    }
}

#[test]
fn train_outputs_are_idempotent_except_timings() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.json", small_experiment_json());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let output = umset(
            &[
                "train",
                "--config",
                &config,
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "9",
            ],
            &[("UMSET_THREADS", "1")],
        );
        assert!(output.status.success(), "{output:?}");
    }
    // Metrics and models are fully deterministic.
    for name in ["metrics.jsonl", "model_seed9.json"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    // The summary differs only in its wall-clock column.
    let strip_wall = |path: &Path| -> Vec<String> {
        let text = fs::read_to_string(path).unwrap();
        text.lines()
            .map(|line| {
                let cells: Vec<&str> = line.split(',').collect();
                cells
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != 7)
                    .map(|(_, c)| *c)
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect()
    };
    assert_eq!(
        strip_wall(&out_a.join("summary.csv")),
        strip_wall(&out_b.join("summary.csv"))
    );
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "exp.json", small_experiment_json());
    let gen_dir = dir.path().join("gen");
    let train_dir = dir.path().join("train");
    assert!(umset(
        &["gen", "--config", &config, "--out", gen_dir.to_str().unwrap()],
        &[]
    )
    .status
    .success());
    assert!(umset(
        &[
            "train",
            "--config",
            &config,
            "--out",
            train_dir.to_str().unwrap(),
            "--seed",
            "5"
        ],
        &[]
    )
    .status
    .success());
    let model = train_dir.join("model_seed5.json");
    let test_csv = gen_dir.join("test.csv");
    let eval_dir = dir.path().join("eval");
    let output = umset(
        &[
            "eval",
            "--model",
            model.to_str().unwrap(),
            "--data",
            test_csv.to_str().unwrap(),
            "--out",
            eval_dir.to_str().unwrap(),
        ],
        &[],
    );
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("test_error"), "{stdout}");
    let eval_json = fs::read_to_string(eval_dir.join("eval.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&eval_json).unwrap();
    let error = doc["test_error"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&error));
}

#[test]
fn eval_without_model_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("test.csv");
    fs::write(&data, "0.1,0.2,1\n").unwrap();
    let output = umset(
        &[
            "eval",
            "--model",
            dir.path().join("missing.json").to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("does not exist"), "{stderr}");
}

#[test]
fn bad_config_reports_field_path_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "bad.json",
        &small_experiment_json().replace(r#""dim": 2"#, r#""dim": "two""#),
    );
    let output = umset(
        &["train", "--config", &config, "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("data.gaussian.dim"), "{stderr}");
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let sweep_json = format!(
        r#"{{"base": {}, "axis": "epsilon", "values": [0.0, 0.2]}}"#,
        small_experiment_json()
    );
    let config = write_config(dir.path(), "sweep.json", &sweep_json);
    let out = dir.path().join("sweep");
    let output = umset(
        &[
            "sweep",
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "4",
        ],
        &[],
    );
    assert!(output.status.success(), "{output:?}");
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "{table}");
    assert!(lines[0].starts_with("axis,value"));
    assert!(lines[1].starts_with("epsilon,0,"));
    assert!(lines[2].starts_with("epsilon,0.2,"));
}

#[test]
fn verify_passes_clean_and_fails_mutated() {
    let dir = tempfile::tempdir().unwrap();
    let output = umset(&["verify", "--out", dir.path().to_str().unwrap()], &[]);
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("[PASS] theorem1_posterior_equivalence"));
    assert!(stdout.contains("[PASS] lemma4_lipschitz_bound"));
    assert!(!stdout.contains("[FAIL]"));
    let report = fs::read_to_string(dir.path().join("verify.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!(parsed.as_array().unwrap().len() >= 6);

    let output = umset(&["verify", "--mutate"], &[]);
    assert_eq!(output.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("[FAIL] theorem1_posterior_equivalence"));
}

/// Synthetic IDX files: 2×2 images whose mean intensity separates two
/// classes, exercising the real-dataset ingestion path end to end.
#[test]
fn train_from_idx_source() {
    let dir = tempfile::tempdir().unwrap();
    let write_pair = |prefix: &str, n: usize, seed: u64| -> (String, String) {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as u32
        };
        let mut images: Vec<u8> = Vec::new();
        let mut labels: Vec<u8> = Vec::new();
        for _ in 0..n {
            let class = (next() % 10) as u8;
            let base = if class % 2 == 0 { 200u32 } else { 40 };
            for _ in 0..4 {
                images.push((base + next() % 40) as u8);
            }
            labels.push(class);
        }
        let img_path = dir.path().join(format!("{prefix}-images"));
        let lab_path = dir.path().join(format!("{prefix}-labels"));
        let mut img = vec![];
        img.extend(0x0803u32.to_be_bytes());
        img.extend((n as u32).to_be_bytes());
        img.extend(2u32.to_be_bytes());
        img.extend(2u32.to_be_bytes());
        img.extend(&images);
        fs::write(&img_path, img).unwrap();
        let mut lab = vec![];
        lab.extend(0x0801u32.to_be_bytes());
        lab.extend((n as u32).to_be_bytes());
        lab.extend(&labels);
        fs::write(&lab_path, lab).unwrap();
        (
            img_path.display().to_string(),
            lab_path.display().to_string(),
        )
    };
    let (train_images, train_labels) = write_pair("train", 600, 1);
    let (test_images, test_labels) = write_pair("t10k", 300, 2);

    let config_json = format!(
        r#"{{
            "method": "umssc",
            "data": {{"idx": {{
                "train_images": {train_images:?},
                "train_labels": {train_labels:?},
                "test_images": {test_images:?},
                "test_labels": {test_labels:?},
                "positive_classes": [0, 2, 4, 6, 8]
            }}}},
            "m": 2,
            "n_tr": 400,
            "priors": {{"fixed": [0.9, 0.1]}},
            "epochs": 60,
            "batch_size": 64,
            "learning_rate": 0.01,
            "hidden": [8],
            "seeds": [1]
        }}"#
    );
    let config = write_config(dir.path(), "idx.json", &config_json);
    let out = dir.path().join("out");
    let output = umset(
        &["train", "--config", &config, "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(output.status.success(), "{output:?}");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    // Intensity almost determines the class, so even a short run separates.
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let mean_error: f64 = row[5].parse().unwrap();
    assert!(mean_error < 0.3, "{summary}");
}

#[test]
fn requesting_impossible_composition_fails_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "exp.json",
        &small_experiment_json()
            .replace(r#""fixed": [0.8, 0.2]"#, r#""fixed": [0.99, 0.2]"#)
            .replace(r#""pi_d": 0.5"#, r#""pi_d": 0.1"#),
    );
    let output = umset(
        &[
            "gen",
            "--config",
            &config,
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("pool cannot satisfy the composition"), "{stderr}");
}
