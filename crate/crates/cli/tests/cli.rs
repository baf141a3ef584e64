//! Contract tests for the `sdfmap` binary: stage chaining, artifact layout,
//! and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sdfmap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdfmap"))
}

fn run(args: &[&str]) -> Output {
    sdfmap().args(args).output().expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_scene(dir: &Path) -> PathBuf {
    let path = dir.join("scene.json");
    let scene = serde_json::json!({
        "primitives": [
            {"kind": "sphere", "center": [6.0, 0.0, 0.0], "radius": 1.0}
        ]
    });
    std::fs::write(&path, serde_json::to_string_pretty(&scene).unwrap()).unwrap();
    path
}

/// Small config keeping every stage fast.
fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    let config = serde_json::json!({
        "method": "gaussian",
        "scan": {
            "azimuth_steps": 96,
            "elevations": [-0.1, -0.05, 0.0, 0.05, 0.1],
            "max_range": 30.0,
            "origin": [0.0, 0.0, 0.0]
        },
        "train": {"learning_rate": 0.004, "epochs": 3, "seed": 7},
        "mlp": {"hidden_width": 16, "seed": 8},
        "encoder": {"enabled": true, "freq_scale": 0.2, "seed": 9},
        "grid": {
            "bounds": {"min": [4.0, -2.0, -1.5], "max": [8.0, 2.0, 1.5]},
            "resolution": [16, 16, 12],
            "export_csv": false
        },
        "slice": {"z": 0.0, "min": [4.0, -2.0], "max": [8.0, 2.0], "resolution": [24, 24]},
        "eval": {"shell_halfwidth": 0.5, "points": 200, "seed": 11}
    });
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let config = write_config(dir.path());
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let scan_dir = dir.path().join("scan");
    let out = run(&[
        "simulate",
        "--scene",
        &s(&scene),
        "--config",
        &s(&config),
        "--out",
        &s(&scan_dir),
    ]);
    assert_exit(&out, 0);
    assert!(scan_dir.join("scan.xyz").is_file());
    assert!(scan_dir.join("manifest.json").is_file());

    let aug_dir = dir.path().join("aug");
    let out = run(&[
        "augment",
        "--cloud",
        &s(&scan_dir.join("scan.xyz")),
        "--config",
        &s(&config),
        "--out",
        &s(&aug_dir),
    ]);
    assert_exit(&out, 0);
    assert!(aug_dir.join("dataset.txt").is_file());

    let train_dir = dir.path().join("train");
    let out = run(&[
        "train",
        "--dataset",
        &s(&aug_dir.join("dataset.txt")),
        "--config",
        &s(&config),
        "--out",
        &s(&train_dir),
    ]);
    assert_exit(&out, 0);
    assert!(train_dir.join("model.sdfm").is_file());
    let loss = std::fs::read_to_string(train_dir.join("loss.csv")).unwrap();
    assert!(loss.starts_with("epoch,mean_loss\n"));
    assert_eq!(loss.lines().count(), 1 + 3);

    let eval_dir = dir.path().join("eval");
    let out = run(&[
        "eval",
        "--checkpoint",
        &s(&train_dir.join("model.sdfm")),
        "--scene",
        &s(&scene),
        "--dataset",
        &s(&aug_dir.join("dataset.txt")),
        "--config",
        &s(&config),
        "--out",
        &s(&eval_dir),
    ]);
    assert_exit(&out, 0);
    let metrics = std::fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    assert!(metrics.contains("sign_agreement"));
    let scatter = std::fs::read_to_string(eval_dir.join("scatter.csv")).unwrap();
    assert!(scatter.starts_with("sdf_label,sdf_pred,conf_pred,valid_flag\n"));

    let extract_dir = dir.path().join("extract");
    let out = run(&[
        "extract",
        "--checkpoint",
        &s(&train_dir.join("model.sdfm")),
        "--config",
        &s(&config),
        "--out",
        &s(&extract_dir),
    ]);
    assert_exit(&out, 0);
    assert!(extract_dir.join("mesh.obj").is_file());
    assert!(extract_dir.join("mesh.ply").is_file());

    let slice_dir = dir.path().join("slice");
    let out = run(&[
        "slice",
        "--checkpoint",
        &s(&train_dir.join("model.sdfm")),
        "--config",
        &s(&config),
        "--out",
        &s(&slice_dir),
    ]);
    assert_exit(&out, 0);
    let pgm = std::fs::read_to_string(slice_dir.join("slice.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n24 24\n255\n"));
    let csv = std::fs::read_to_string(slice_dir.join("slice.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 24 * 24);
}

#[test]
fn ingest_filters_classes_gate_and_ground() {
    let dir = tempfile::tempdir().unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    // Cloud: one ego point (class 1), one background (class 2), two obstacles,
    // one floor point below the threshold.
    let cloud = dir.path().join("cloud.xyz");
    std::fs::write(
        &cloud,
        "5 0 0 1.0 1\n6 0 0 1.0 2\n7 0 0 1.0 3\n7 1 0 1.0 3\n8 0 -2.0 1.0 3\n",
    )
    .unwrap();
    let prev = dir.path().join("prev.xyz");
    std::fs::write(&prev, "50 50 50\n").unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"filter": {"drop_class_ids": [1, 2], "ground_z_threshold": -1.563, "hausdorff_threshold": 0.5}}"#,
    )
    .unwrap();

    let out_dir = dir.path().join("ingest");
    let out = run(&[
        "ingest",
        "--cloud",
        &s(&cloud),
        "--prev",
        &s(&prev),
        "--config",
        &s(&config),
        "--out",
        &s(&out_dir),
    ]);
    assert_exit(&out, 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["metrics"]["gate_passed"], true);
    assert_eq!(manifest["metrics"]["obstacle_count"], 2);
    assert_eq!(manifest["metrics"]["floor_count"], 1);
    assert!(out_dir.join("obstacles.xyz").is_file());
    assert!(out_dir.join("floor.xyz").is_file());

    // Identical clouds: the gate holds the frame back.
    let out_dir2 = dir.path().join("ingest2");
    let out = run(&[
        "ingest",
        "--cloud",
        &s(&cloud),
        "--prev",
        &s(&cloud),
        "--config",
        &s(&config),
        "--out",
        &s(&out_dir2),
    ]);
    assert_exit(&out, 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir2.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["metrics"]["gate_passed"], false);
    assert!(!out_dir2.join("obstacles.xyz").exists());
}

#[test]
fn ingest_accepts_binary_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let cloud = dir.path().join("cloud.bin");
    let mut bytes = Vec::new();
    for rec in [
        [5.0f32, 0.0, 0.0, 1.0, 0.0],
        [6.0, 1.0, 0.0, 1.0, 1.0],
        [7.0, -1.0, -2.0, 1.0, 2.0],
    ] {
        for v in rec {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(&cloud, bytes).unwrap();
    let labels = dir.path().join("labels.txt");
    std::fs::write(&labels, "3\n1\n3\n").unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"filter": {"drop_class_ids": [1]}}"#).unwrap();

    let out_dir = dir.path().join("out");
    let out = run(&[
        "ingest",
        "--cloud",
        &s(&cloud),
        "--labels",
        &s(&labels),
        "--config",
        &s(&config),
        "--out",
        &s(&out_dir),
    ]);
    assert_exit(&out, 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    // One dropped by class, one below ground.
    assert_eq!(manifest["metrics"]["obstacle_count"], 1);
    assert_eq!(manifest["metrics"]["floor_count"], 1);
}

#[test]
fn invalid_config_field_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"train": {"learning_rte": 0.1}}"#).unwrap();
    let scene = write_scene(dir.path());
    let out = run(&[
        "simulate",
        "--scene",
        scene.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_exit(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rte"));
}

#[test]
fn unknown_subcommand_exits_one() {
    let out = run(&["frobnicate"]);
    assert_exit(&out, 1);
}

#[test]
fn missing_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--dataset",
        dir.path().join("nope.txt").to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_exit(&out, 1);
}

#[test]
fn eval_requires_scene_or_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let fake = dir.path().join("model.sdfm");
    std::fs::write(&fake, b"whatever").unwrap();
    let out = run(&[
        "eval",
        "--checkpoint",
        fake.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_exit(&out, 1);
}

#[test]
fn corrupt_checkpoint_is_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let fake = dir.path().join("model.sdfm");
    std::fs::write(&fake, b"not a checkpoint at all").unwrap();
    let out = run(&[
        "extract",
        "--checkpoint",
        fake.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_exit(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}

#[test]
fn seed_override_changes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let config = write_config(dir.path());
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let scan_dir = dir.path().join("scan");
    assert_exit(
        &run(&[
            "simulate",
            "--scene",
            &s(&scene),
            "--config",
            &s(&config),
            "--out",
            &s(&scan_dir),
        ]),
        0,
    );
    let mk = |name: &str, seed: Option<&str>| {
        let out_dir = dir.path().join(name);
        let mut args = vec![
            "augment".to_string(),
            "--cloud".into(),
            s(&scan_dir.join("scan.xyz")),
            "--config".into(),
            s(&config),
            "--out".into(),
            s(&out_dir),
        ];
        if let Some(seed) = seed {
            args.push("--seed".into());
            args.push(seed.into());
        }
        let out = sdfmap().args(&args).output().unwrap();
        assert_exit(&out, 0);
        std::fs::read(out_dir.join("dataset.txt")).unwrap()
    };
    let a = mk("a", None);
    let b = mk("b", Some("4242"));
    let c = mk("c", Some("4242"));
    assert_ne!(a, b);
    assert_eq!(b, c);
}
