mod common;

use std::fs;

use common::{crossview, s, stdout_json, write_dataset, Workspace};
use crossview::dataset_io::{load_dataset, save_dataset, save_gray_png, save_mask_png};
use crossview::image::Image;
use crossview::{BinaryMask, LabeledSample};
use crossview_cli::{digest_tree, parse_config, run_pipeline};
use serde_json::Value;

fn run(ws: &Workspace, extra: &[&str]) -> Value {
    let config = ws.config();
    let mut args = vec!["--quiet", "--config", s(&config), "run"];
    args.extend_from_slice(extra);
    stdout_json(&crossview(&args))
}

fn count_png(dir: &std::path::Path) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count()
}

#[test]
fn run_report_counts_match_files() {
    let ws = Workspace::new(3, 2, 96, 80, "k = 3\nstride = 2\n");
    let report = run(&ws, &[]);
    assert_eq!(report["n_source"], 3);
    assert_eq!(report["n_aligned"], report["n_source"]);
    assert_eq!(report["n_target"], 2);
    assert_eq!(report["config"]["k"], 3);
    assert_eq!(report["config"]["stride"], 2);
    assert!(report["stage_times"].as_array().unwrap().len() >= 4);

    let out = ws.path("out");
    assert_eq!(count_png(&out.join("aligned/images")), 3);
    let n_patches = report["n_patches"].as_u64().unwrap() as usize;
    assert_eq!(n_patches, 6);
    assert_eq!(count_png(&out.join("patches/images")), n_patches);
    let n_fused = report["n_fused"].as_u64().unwrap() as usize;
    assert!(n_fused > 0 && n_fused <= 3 * n_patches);
    assert_eq!(count_png(&out.join("fused/images")), n_fused);
    assert_eq!(count_png(&out.join("fused/masks")), n_fused);
    assert_eq!(
        fs::read_to_string(out.join("fused/provenance.jsonl"))
            .unwrap()
            .lines()
            .count(),
        n_fused
    );
    assert_eq!(count_png(&out.join("noisy/images")), n_fused);

    let on_disk: Value = serde_json::from_str(&fs::read_to_string(out.join("run_report.json")).unwrap()).unwrap();
    assert!(on_disk.get("stage_times").is_none());
    assert_eq!(on_disk["n_fused"], report["n_fused"]);
    assert!((report["source_mean_after"].as_f64().unwrap() - report["target_mean"].as_f64().unwrap()).abs() <= 0.5);
}

#[test]
fn single_source_single_patch_k1_gives_one_sample() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
    let src = common::frame("only", 64, 64, 140.0, 1, &mut rng);
    save_dataset(&[src], &dir.path().join("source")).unwrap();
    write_dataset(&dir.path().join("target"), 1, 64, 64, 100.0, 1, 6);
    let mut config = parse_config_str_in(dir.path(), "k = 1\n");
    config.seed = 3;
    let report = run_pipeline(&config).unwrap();
    assert_eq!((report.n_patches, report.n_fused), (1, 1));
    assert_eq!(count_png(&config.output_dir.join("fused/images")), 1);
}

fn parse_config_str_in(dir: &std::path::Path, text: &str) -> crossview_cli::PipelineConfig {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    parse_config(&path).unwrap()
}

#[test]
fn reruns_and_thread_counts_give_identical_digests() {
    let ws = Workspace::new(3, 2, 96, 80, "");
    run(&ws, &["--threads", "1"]);
    let first = digest_tree(&ws.path("out")).unwrap();
    run(&ws, &["--threads", "1"]);
    assert_eq!(digest_tree(&ws.path("out")).unwrap(), first);
    run(&ws, &["--threads", "8"]);
    assert_eq!(digest_tree(&ws.path("out")).unwrap(), first);
    assert!(first.len() > 20);
}

#[test]
fn seed_changes_fused_output() {
    let ws = Workspace::new(3, 2, 96, 80, "");
    run(&ws, &[]);
    let a = digest_tree(&ws.path("out/noisy")).unwrap();
    run(&ws, &["--seed", "43"]);
    assert_ne!(digest_tree(&ws.path("out/noisy")).unwrap(), a);
}

#[test]
fn standalone_stages_reproduce_pipeline_artifacts() {
    let ws = Workspace::new(3, 2, 96, 80, "k = 2\nstride = 3\nalpha = 0.1\npadding = 3\n");
    run(&ws, &[]);
    let (out, alone) = (ws.path("out"), ws.path("alone"));
    let cfg = ws.config();
    let stage = |args: &[&str]| {
        let mut full = vec!["--quiet", "--config", s(&cfg)];
        full.extend_from_slice(args);
        stdout_json(&crossview(&full))
    };

    let align = stage(&[
        "align",
        "--source",
        s(&ws.path("source")),
        "--target",
        s(&ws.path("target")),
        "--out",
        s(&alone.join("aligned")),
    ]);
    assert_eq!(align["n_aligned"], 3);
    stage(&[
        "extract",
        "--dataset",
        s(&out.join("aligned")),
        "--out",
        s(&alone.join("patches")),
    ]);
    stage(&[
        "fuse",
        "--dataset",
        s(&out.join("aligned")),
        "--patches",
        s(&out.join("patches")),
        "--out",
        s(&alone.join("fused")),
    ]);
    stage(&[
        "noise",
        "--dataset",
        s(&out.join("fused")),
        "--out",
        s(&alone.join("noisy")),
    ]);

    for name in ["aligned", "patches", "fused", "noisy"] {
        let a = digest_tree(&out.join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, digest_tree(&alone.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn flags_override_config() {
    let ws = Workspace::new(2, 1, 64, 64, "");
    run(&ws, &[]);
    let cfg = ws.config();
    let fused = |k: &str, dir: &str| {
        stdout_json(&crossview(&[
            "--quiet",
            "--config",
            s(&cfg),
            "fuse",
            "--dataset",
            s(&ws.path("out/aligned")),
            "--patches",
            s(&ws.path("out/patches")),
            "--k",
            k,
            "--out",
            s(&ws.path(dir)),
        ]))["n_fused"]
            .as_u64()
            .unwrap()
    };
    assert!(fused("1", "k1") <= 4);
    assert!(fused("1", "k1") < fused("3", "k3"));
}

#[test]
fn bad_config_reports_key_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    for (text, key) in [
        ("alpha = -1.0", "alpha"),
        ("stirde = 3", "stirde"),
        ("k = \"three\"", "k"),
    ] {
        fs::write(&path, text).unwrap();
        let out = crossview(&["--config", s(&path), "run"]);
        assert!(!out.status.success());
        let err: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(err["error"]["message"].as_str().unwrap().contains(key), "{err}");
    }
}

#[test]
fn failing_stage_is_named_and_moved_aside() {
    let ws = Workspace::new(2, 1, 64, 64, "");
    // An all-black target has no reachable gamma.
    let target = vec![LabeledSample::new(
        "t",
        Image::filled(64, 64, 0.0).unwrap(),
        BinaryMask::empty(64, 64).unwrap(),
    )
    .unwrap()];
    fs::remove_dir_all(ws.path("target")).unwrap();
    save_dataset(&target, &ws.path("target")).unwrap();
    let config = ws.config();
    let out = crossview(&["--quiet", "--config", s(&config), "run"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["error"]["stage"], "align");
    assert!(ws.path("out/aligned_failed").is_dir());
    assert!(!ws.path("out/aligned").exists());
    assert!(!ws.path("out/run_report.json").exists());
}

#[test]
fn orphan_files_fail_in_load() {
    let ws = Workspace::new(2, 1, 64, 64, "");
    fs::remove_file(ws.path("source/masks/f001.png")).unwrap();
    let config = ws.config();
    let out = crossview(&["--quiet", "--config", s(&config), "run"]);
    let err: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["error"]["stage"], "load");
    assert!(err["error"]["message"].as_str().unwrap().contains("f001"));
}

#[test]
fn usage_errors_are_json_too() {
    let out = crossview(&["align", "--source"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
}

#[test]
fn stats_reports_pixel_weighted_mean() {
    let dir = tempfile::tempdir().unwrap();
    let samples = vec![
        LabeledSample::new(
            "a",
            Image::filled(2, 2, 10.0).unwrap(),
            BinaryMask::empty(2, 2).unwrap(),
        )
        .unwrap(),
        LabeledSample::new(
            "b",
            Image::filled(4, 2, 40.0).unwrap(),
            BinaryMask::empty(4, 2).unwrap(),
        )
        .unwrap(),
    ];
    save_dataset(&samples, dir.path()).unwrap();
    let v = stdout_json(&crossview(&["stats", "--dataset", s(dir.path())]));
    assert_eq!(v["sample_count"], 2);
    assert_eq!(v["mean_intensity"], 30.0);
}

fn write_eval_fixture(dir: &std::path::Path) {
    // Two targets; the prediction finds one and adds a 5-pixel false blob.
    let mut gt = BinaryMask::empty(256, 256).unwrap();
    let mut pred = vec![0.0; 256 * 256];
    for (x, y) in [(20, 20), (21, 20), (20, 21), (21, 21)] {
        gt.set(x, y, true);
        pred[y * 256 + x] = 255.0;
    }
    gt.set(200, 200, true);
    for x in 100..105 {
        pred[50 * 256 + x] = 200.0;
    }
    fs::create_dir_all(dir.join("pred")).unwrap();
    fs::create_dir_all(dir.join("gt")).unwrap();
    save_gray_png(&Image::new(256, 256, pred).unwrap(), &dir.join("pred/x.png")).unwrap();
    save_mask_png(&gt, &dir.join("gt/x.png")).unwrap();
}

#[test]
fn eval_and_roc_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    write_eval_fixture(dir.path());
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    let v = stdout_json(&crossview(&["eval", "--pred", s(&pred), "--gt", s(&gt)]));
    assert_eq!(v["pd"], 0.5);
    assert_eq!(v["fa"], 1e6 * 5.0 / 65536.0);
    assert_eq!(v["false_pixels"], 5);
    assert_eq!(v["intersection"], 4);
    assert_eq!(v["union"], 10);

    let out = crossview(&["roc", "--pred", s(&pred), "--gt", s(&gt), "--thresholds", "0.9,0.5"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "threshold,fa,pd");
    assert_eq!(lines[1], "0.9,0,0.5");
    assert_eq!(lines[2], format!("0.5,{},0.5", 1e6 * 5.0 / 65536.0));

    let bad = crossview(&["roc", "--pred", s(&pred), "--gt", s(&gt), "--thresholds", "0.5,0.9"]);
    assert!(!bad.status.success());
}

#[test]
fn loss_reports_components() {
    let dir = tempfile::tempdir().unwrap();
    write_eval_fixture(dir.path());
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    let v = stdout_json(&crossview(&["loss", "--pred", s(&pred), "--gt", s(&gt)]));
    assert_eq!(v["noise"], 0.0);
    assert_eq!(v["total"], v["bce"]);
    assert!(v["bce"].as_f64().unwrap() > 0.0);

    let clean = LabeledSample::new(
        "c",
        Image::filled(16, 16, 100.0).unwrap(),
        BinaryMask::empty(16, 16).unwrap(),
    )
    .unwrap();
    let noisy = clean.with_image(Image::filled(16, 16, 110.0).unwrap()).unwrap();
    save_dataset(&[clean], &dir.path().join("clean")).unwrap();
    save_dataset(&[noisy], &dir.path().join("noisy")).unwrap();
    let v = stdout_json(&crossview(&[
        "loss",
        "--pred",
        s(&pred),
        "--gt",
        s(&gt),
        "--noise-pair",
        s(&dir.path().join("clean/images")),
        s(&dir.path().join("noisy/images")),
    ]));
    // Features are in normalized intensity units.
    let expected = (10.0f64 / 255.0).powi(2);
    assert!((v["noise"].as_f64().unwrap() - expected).abs() < 1e-15);
    assert_eq!(
        v["total"].as_f64().unwrap(),
        v["bce"].as_f64().unwrap() + v["noise"].as_f64().unwrap()
    );
}

#[test]
fn match_prints_k_lines_per_patch() {
    let ws = Workspace::new(2, 1, 64, 64, "");
    run(&ws, &[]);
    let aligned = load_dataset::<f64>(&ws.path("out/aligned")).unwrap();
    assert_eq!(aligned[0].id(), "f000");
    let out = crossview(&[
        "match",
        "--image",
        s(&ws.path("out/aligned/images/f000.png")),
        "--mask",
        s(&ws.path("out/aligned/masks/f000.png")),
        "--patch",
        s(&ws.path("out/patches")),
        "--stride",
        "2",
        "--k",
        "2",
        "--min-sep",
        "6",
    ]);
    assert!(out.status.success());
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4 * 2);
    for pair in lines.chunks(2) {
        assert_eq!(pair[0]["patch_id"], pair[1]["patch_id"]);
        assert_eq!((pair[0]["rank"].as_u64(), pair[1]["rank"].as_u64()), (Some(1), Some(2)));
        assert!(pair[0]["score"].as_f64() >= pair[1]["score"].as_f64());
    }
}
