//! End-to-end command tests against the built binary: exit codes, output
//! layout, determinism and resume behavior.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_objnav")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("objnav_cli_tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn objnav")
}

fn assert_code(out: &Output, want: i32) {
    let code = out.status.code().unwrap_or(-1);
    assert_eq!(
        code,
        want,
        "exit {code} != {want}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Small config: fast scenes, tiny training, small eval.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
  "scenes": {"count": 10, "train_ratio": 0.8, "seed": 5},
  "model": {"dropout": 0.0},
  "train": {"episodes": 40, "workers": 1, "lr": 0.0007, "log_every": 10, "seed": 3, "max_episode_steps": 30, "horizon": 15},
  "eval": {"episodes_per_bucket": 10, "max_episode_steps": 30, "seed": 2}
}"#,
    )
    .unwrap();
    path
}

fn file_bytes(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("read {}: {e}", p.display()))
}

#[test]
fn gen_scenes_is_deterministic_and_disjoint() {
    let d1 = tmp("gen1");
    let d2 = tmp("gen2");
    let cfg = small_config(&d1);
    assert_code(&run(&["gen-scenes", "--config", cfg.to_str().unwrap(), "--out", d1.to_str().unwrap()]), 0);
    assert_code(&run(&["gen-scenes", "--config", cfg.to_str().unwrap(), "--out", d2.to_str().unwrap()]), 0);

    let manifest: serde_json::Value =
        serde_json::from_slice(&file_bytes(&d1.join("scenes/manifest.json"))).unwrap();
    let train: Vec<String> = manifest["train"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let test: Vec<String> = manifest["test"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    assert_eq!(train.len() + test.len(), 10);
    assert!(train.iter().all(|t| !test.contains(t)), "splits overlap");

    for f in train.iter().chain(&test) {
        assert_eq!(
            file_bytes(&d1.join("scenes").join(f)),
            file_bytes(&d2.join("scenes").join(f)),
            "{f} differs between identical runs"
        );
    }
    assert!(d1.join("resolved_config.json").exists());
}

#[test]
fn config_errors_exit_2() {
    let d = tmp("cfg_err");
    // Missing file.
    let out = run(&["gen-scenes", "--config", "/nonexistent/cfg.json", "--out", d.to_str().unwrap()]);
    assert_code(&out, 2);
    // Unknown key.
    let bad = d.join("bad.json");
    std::fs::write(&bad, r#"{"no_such_key": 1}"#).unwrap();
    let out = run(&["gen-scenes", "--config", bad.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert_code(&out, 2);
    // Invalid value.
    let bad2 = d.join("bad2.json");
    std::fs::write(&bad2, r#"{"model": {"dropout": 2.0}}"#).unwrap();
    let out = run(&["gen-scenes", "--config", bad2.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert_code(&out, 2);
    // Unknown flag: clap uses exit code 2.
    let out = run(&["gen-scenes", "--frobnicate"]);
    assert_code(&out, 2);
}

#[test]
fn train_is_reproducible_and_resume_extends() {
    let d = tmp("train");
    let cfg = small_config(&d);
    let cfg = cfg.to_str().unwrap();
    let out_dir = d.to_str().unwrap();
    assert_code(&run(&["gen-scenes", "--config", cfg, "--out", out_dir]), 0);

    assert_code(&run(&["train", "--config", cfg, "--out", out_dir]), 0);
    let metrics1 = file_bytes(&d.join("metrics.jsonl"));
    assert!(!metrics1.is_empty());
    let ckpt = d.join("checkpoints/ckpt_latest.bin");
    assert!(ckpt.exists());
    let ckpt1 = file_bytes(&ckpt);

    // Identical rerun: byte-identical metrics and checkpoint.
    assert_code(&run(&["train", "--config", cfg, "--out", out_dir]), 0);
    assert_eq!(metrics1, file_bytes(&d.join("metrics.jsonl")));
    assert_eq!(ckpt1, file_bytes(&ckpt));

    // Resume monotonically extends the episode counter.
    let out = run(&[
        "train", "--config", cfg, "--out", out_dir,
        "--resume", ckpt.to_str().unwrap(), "--episodes", "60",
    ]);
    assert_code(&out, 0);
    let text = String::from_utf8(file_bytes(&d.join("metrics.jsonl"))).unwrap();
    let last: serde_json::Value =
        serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["episode"].as_u64().unwrap(), 60);

    // Resuming under a structurally different config is refused.
    let other_cfg = d.join("other.json");
    std::fs::write(
        &other_cfg,
        r#"{"embeddings": {"mode": "synthetic", "dim": 16, "noise_sigma": 0.1, "seed": 7}}"#,
    )
    .unwrap();
    let out = run(&[
        "train", "--config", other_cfg.to_str().unwrap(), "--out", out_dir,
        "--resume", ckpt.to_str().unwrap(),
    ]);
    assert_code(&out, 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("hash"), "hash mismatch not reported: {err}");
}

#[test]
fn train_ten_episode_smoke_is_fast() {
    let d = tmp("smoke");
    let cfg = small_config(&d);
    let cfg = cfg.to_str().unwrap();
    let out_dir = d.to_str().unwrap();
    assert_code(&run(&["gen-scenes", "--config", cfg, "--out", out_dir]), 0);
    let started = std::time::Instant::now();
    assert_code(
        &run(&["train", "--config", cfg, "--out", out_dir, "--episodes", "10", "--workers", "1"]),
        0,
    );
    assert!(
        started.elapsed().as_secs() < 60,
        "smoke train took {:?}",
        started.elapsed()
    );
}

#[test]
fn eval_split_filter_restricts_targets() {
    let d = tmp("split_eval");
    let cfg_path = d.join("config.json");
    std::fs::write(
        &cfg_path,
        r#"{
  "catalog": {"mode": "desk", "children_per_cluster": 3},
  "scenes": {"count": 10, "train_ratio": 0.8, "seed": 6},
  "eval": {"episodes_per_bucket": 8, "max_episode_steps": 30, "seed": 2},
  "split": {"seen": 9, "unseen": 3, "seed": 3}
}"#,
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();
    let out_dir = d.to_str().unwrap();
    assert_code(&run(&["gen-scenes", "--config", cfg, "--out", out_dir]), 0);
    assert_code(
        &run(&["eval", "--config", cfg, "--out", out_dir, "--baseline", "--split", "unseen"]),
        0,
    );
    let report: serde_json::Value = serde_json::from_slice(&file_bytes(
        &d.join("reports/eval_random_unseen.json"),
    ))
    .unwrap();
    // Only unseen classes may appear as targets: three at most.
    let classes = report["per_class"].as_array().unwrap();
    assert!(!classes.is_empty() && classes.len() <= 3, "{classes:?}");
}

#[test]
fn eval_baseline_checkpoint_and_failure_modes() {
    let d = tmp("eval");
    let cfg = small_config(&d);
    let cfg = cfg.to_str().unwrap();
    let out_dir = d.to_str().unwrap();
    assert_code(&run(&["gen-scenes", "--config", cfg, "--out", out_dir]), 0);

    // Baseline needs no checkpoint.
    let out = run(&["eval", "--config", cfg, "--out", out_dir, "--baseline"]);
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("SR") && stdout.contains("SPL") && stdout.contains("L>=5"));
    assert!(d.join("reports/eval_random_all.json").exists());

    // Neither baseline nor checkpoint: usage error.
    assert_code(&run(&["eval", "--config", cfg, "--out", out_dir]), 2);
    // Missing checkpoint file: runtime error.
    assert_code(
        &run(&["eval", "--config", cfg, "--out", out_dir, "--checkpoint", "/nonexistent.bin"]),
        1,
    );
    // Seen/unseen filters need a split in the config.
    assert_code(
        &run(&["eval", "--config", cfg, "--out", out_dir, "--baseline", "--split", "unseen"]),
        2,
    );

    // Trained checkpoint evaluates.
    assert_code(&run(&["train", "--config", cfg, "--out", out_dir]), 0);
    let ckpt = d.join("checkpoints/ckpt_latest.bin");
    let out = run(&["eval", "--config", cfg, "--out", out_dir, "--checkpoint", ckpt.to_str().unwrap()]);
    assert_code(&out, 0);
    let report: serde_json::Value =
        serde_json::from_slice(&file_bytes(&d.join("reports/eval_all.json"))).unwrap();
    assert!(report["checkpoint_hash"].is_string());
    assert!(report["l1"]["episodes"].as_u64().unwrap() >= 10);
}

#[test]
fn inspect_writes_dump_and_render() {
    let d = tmp("inspect");
    let cfg = small_config(&d);
    let cfg = cfg.to_str().unwrap();
    let out_dir = d.to_str().unwrap();
    assert_code(&run(&["gen-scenes", "--config", cfg, "--out", out_dir]), 0);
    assert_code(&run(&["train", "--config", cfg, "--out", out_dir]), 0);
    let ckpt = d.join("checkpoints/ckpt_latest.bin");

    // Find a child class present in scene 0.
    let scene: serde_json::Value =
        serde_json::from_slice(&file_bytes(&d.join("scenes/scene_0000.json"))).unwrap();
    let target = scene["objects"]
        .as_array()
        .unwrap()
        .iter()
        .find(|o| !o["is_parent"].as_bool().unwrap())
        .unwrap()["class"]
        .as_str()
        .unwrap()
        .to_string();

    let out = run(&[
        "inspect", "--config", cfg, "--out", out_dir,
        "--checkpoint", ckpt.to_str().unwrap(),
        "--scene", d.join("scenes/scene_0000.json").to_str().unwrap(),
        "--target", &target,
        "--render",
    ]);
    assert_code(&out, 0);
    let dump = d.join(format!("dumps/scene_0000_{target}.jsonl"));
    let svg = d.join(format!("dumps/scene_0000_{target}.svg"));
    assert!(dump.exists() && svg.exists());

    // Dump lines parse; action names come from the fixed vocabulary.
    let text = String::from_utf8(file_bytes(&dump)).unwrap();
    let actions = [
        "MoveAhead", "RotateLeft", "RotateRight", "LookUp", "LookDown", "Done",
    ];
    for (k, line) in text.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if k == 0 {
            assert_eq!(v["type"], "meta");
        } else {
            assert!(actions.contains(&v["action"].as_str().unwrap()));
        }
    }
    let svg_text = String::from_utf8(file_bytes(&svg)).unwrap();
    assert!(svg_text.starts_with("<svg") && svg_text.trim_end().ends_with("</svg>"));

    // Bad start pose: usage error. Missing target class: runtime error.
    assert_code(
        &run(&[
            "inspect", "--config", cfg, "--out", out_dir,
            "--checkpoint", ckpt.to_str().unwrap(),
            "--scene", d.join("scenes/scene_0000.json").to_str().unwrap(),
            "--target", &target, "--start", "1,2,17,0",
        ]),
        2,
    );
    assert_code(
        &run(&[
            "inspect", "--config", cfg, "--out", out_dir,
            "--checkpoint", ckpt.to_str().unwrap(),
            "--scene", d.join("scenes/scene_0000.json").to_str().unwrap(),
            "--target", "zeppelin",
        ]),
        1,
    );
}
