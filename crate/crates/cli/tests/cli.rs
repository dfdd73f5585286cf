use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use redtide::data::dataset::Dataset;
use redtide::data::io::RasterFormat;
use redtide::data::labels::LabelSet;
use redtide::data::raster::Raster;
use redtide::inference::ScoreMap;
use sha2::{Digest, Sha256};

const TINY: &str = r#"
[synth.benchmark]
train_positive = 1
train_negative = 1
test_positive = 1
test_negative = 1

[synth.benchmark.scene]
height = 48
width = 48
labels_per_raster = 30
band_length = 40

[train]
bank_width = 3
trunk_width = 4
detector_init = "he"
generator_width = 2
discriminator_widths = [2, 2, 2, 2]
stage_iterations = 3
single_stage_iterations = 4
lr_drop_every = 2
single_stage_lr_drop_every = 2
checkpoint_every = 2
adversarial_batch = 8
generated_per_iteration = 8

[train.sampler]
window_count = 2
batch_size = 8
"#;

fn redtide(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redtide"))
        .args(args)
        .current_dir(dir)
        .env_remove("REDTIDE_OUT")
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Digest of every file under `dir`, keyed by relative path.
fn dir_digest(dir: &Path) -> String {
    fn walk(root: &Path, dir: &Path, files: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, files);
            } else {
                files.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut files = BTreeMap::new();
    walk(dir, dir, &mut files);
    let mut h = Sha256::new();
    for (p, bytes) in files {
        h.update(p.to_string_lossy().as_bytes());
        h.update(&bytes);
    }
    format!("{:x}", h.finalize())
}

fn file_digest(path: &Path) -> String {
    format!("{:x}", Sha256::digest(std::fs::read(path).unwrap()))
}

fn setup() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("tiny.toml"), TINY).unwrap();
    ok(redtide(tmp.path(), &["synth", "-c", "tiny.toml", "-o", "data"]));
    tmp
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = setup();
    ok(redtide(tmp.path(), &["synth", "-c", "tiny.toml", "-o", "again"]));
    ok(redtide(tmp.path(), &["synth", "-c", "tiny.toml", "-o", "other", "--seed", "1"]));
    let a = dir_digest(&tmp.path().join("data"));
    assert_eq!(a, dir_digest(&tmp.path().join("again")));
    assert_ne!(a, dir_digest(&tmp.path().join("other")));
}

#[test]
fn synth_labels_list_exactly_the_requested_rasters() {
    let tmp = setup();
    ok(redtide(
        tmp.path(),
        &[
            "synth",
            "-c",
            "tiny.toml",
            "-o",
            "two-one",
            "--set",
            "synth.benchmark.train_positive=2",
            "--set",
            "synth.benchmark.train_negative=1",
        ],
    ));
    let ds = Dataset::load(&tmp.path().join("two-one")).unwrap();
    let pos: Vec<&String> = ds.train.positives.keys().collect();
    assert_eq!(pos, ["train-pos-0", "train-pos-1"]);
    assert_eq!(ds.train.negative_raster_ids, ["train-neg-0"]);
    let labels = std::fs::read_to_string(tmp.path().join("two-one/labels.txt")).unwrap();
    let train_ids: std::collections::BTreeSet<&str> = labels
        .lines()
        .filter(|l| !l.starts_with('#') && l.contains("train"))
        .filter_map(|l| l.split_whitespace().next())
        .collect();
    assert_eq!(train_ids, ["train-pos-0", "train-pos-1"].into_iter().collect());
}

#[test]
fn default_synth_trains_without_warnings() {
    let tmp = tempfile::tempdir().unwrap();
    ok(redtide(tmp.path(), &["synth", "-o", "data"]));
    std::fs::write(tmp.path().join("tiny.toml"), TINY).unwrap();
    let out = ok(redtide(
        tmp.path(),
        &["train", "-c", "tiny.toml", "--data", "data", "-o", "run", "--set", "train.stage_iterations=1"],
    ));
    assert!(!stderr(&out).contains("WARN"), "{}", stderr(&out));
}

fn telemetry_lines(dir: &Path) -> usize {
    std::fs::read_to_string(dir.join("telemetry.jsonl")).unwrap().lines().count()
}

#[test]
fn train_logs_every_iteration_of_each_mode() {
    let tmp = setup();
    ok(redtide(tmp.path(), &["train", "-c", "tiny.toml", "--data", "data", "-o", "three"]));
    assert_eq!(telemetry_lines(&tmp.path().join("three")), 3 * 3);
    assert!(tmp.path().join("three/final.ckpt").is_file());
    ok(redtide(
        tmp.path(),
        &["train", "-c", "tiny.toml", "--data", "data", "-o", "single", "--mode", "rtd-single"],
    ));
    assert_eq!(telemetry_lines(&tmp.path().join("single")), 4);
}

#[test]
fn interrupted_and_resumed_run_matches_uninterrupted() {
    let tmp = setup();
    let base = ["train", "-c", "tiny.toml", "--data", "data"];
    ok(redtide(tmp.path(), &[&base[..], &["-o", "full"]].concat()));
    ok(redtide(tmp.path(), &[&base[..], &["-o", "split", "--max-iterations", "4"]].concat()));
    assert!(tmp.path().join("split/interrupted.ckpt").is_file());
    assert!(!tmp.path().join("split/final.ckpt").exists());
    ok(redtide(tmp.path(), &[&base[..], &["-o", "split", "--resume", "split/interrupted.ckpt"]].concat()));
    assert_eq!(
        file_digest(&tmp.path().join("full/final.ckpt")),
        file_digest(&tmp.path().join("split/final.ckpt"))
    );
    assert_eq!(
        file_digest(&tmp.path().join("full/telemetry.jsonl")),
        file_digest(&tmp.path().join("split/telemetry.jsonl"))
    );
}

#[test]
fn infer_then_eval_end_to_end() {
    let tmp = setup();
    ok(redtide(tmp.path(), &["train", "-c", "tiny.toml", "--data", "data", "-o", "run"]));
    ok(redtide(
        tmp.path(),
        &["infer", "-c", "tiny.toml", "--data", "data", "--checkpoint", "run/final.ckpt", "-o", "inf", "--workers", "2"],
    ));
    let ds = Dataset::load(&tmp.path().join("data")).unwrap();
    for id in ["test-pos-0", "test-neg-0"] {
        let map = ScoreMap::load(id, &tmp.path().join(format!("inf/scores/{id}.rtr"))).unwrap();
        assert_eq!((map.height, map.width), (ds.rasters[id].height, ds.rasters[id].width));
    }
    // One worker gives the same maps as two.
    ok(redtide(
        tmp.path(),
        &["infer", "-c", "tiny.toml", "--data", "data", "--checkpoint", "run/final.ckpt", "-o", "inf1"],
    ));
    assert_eq!(dir_digest(&tmp.path().join("inf")), dir_digest(&tmp.path().join("inf1")));

    for out in ["ev1", "ev2"] {
        ok(redtide(tmp.path(), &["eval", "--data", "data", "--scores", "inf/scores", "-o", out]));
    }
    for f in ["curve.txt", "summary.json"] {
        assert_eq!(
            file_digest(&tmp.path().join("ev1").join(f)),
            file_digest(&tmp.path().join("ev2").join(f))
        );
    }

    ok(redtide(
        tmp.path(),
        &["export-features", "-c", "tiny.toml", "--data", "data", "--checkpoint", "run/final.ckpt", "-o", "feat", "--per-group", "5"],
    ));
    let text = std::fs::read_to_string(tmp.path().join("feat/features.txt")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 15);
    // Post-activation layer-8 width is the trunk width.
    assert_eq!(rows[0].split_whitespace().count(), 1 + 4);
}

#[test]
fn infer_logs_the_published_stride_for_a_600_window() {
    let tmp = setup();
    ok(redtide(tmp.path(), &["train", "-c", "tiny.toml", "--data", "data", "-o", "run"]));
    ok(redtide(
        tmp.path(),
        &[
            "synth",
            "-c",
            "tiny.toml",
            "-o",
            "big",
            "--set",
            "synth.benchmark.scene.height=610",
            "--set",
            "synth.benchmark.scene.width=610",
            "--set",
            "synth.benchmark.test_negative=0",
        ],
    ));
    let out = ok(redtide(
        tmp.path(),
        &["infer", "--data", "big", "--checkpoint", "run/final.ckpt", "-o", "inf", "--window", "600"],
    ));
    assert!(stderr(&out).contains("stride 576x576"), "{}", stderr(&out));
    let plan = std::fs::read_to_string(tmp.path().join("inf/plan.txt")).unwrap();
    assert!(plan.contains("test-pos-0 610 610 600 600 576 576 4"), "{plan}");
    let map = ScoreMap::load("test-pos-0", &tmp.path().join("inf/scores/test-pos-0.rtr")).unwrap();
    assert_eq!((map.height, map.width), (610, 610));
}

#[test]
fn missing_checkpoint_is_an_explicit_error() {
    let tmp = setup();
    let out = redtide(tmp.path(), &["infer", "--data", "data", "--checkpoint", "nope.ckpt", "-o", "inf"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("nope.ckpt"), "{}", stderr(&out));
    let out = redtide(tmp.path(), &["infer", "--data", "data", "-o", "inf"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_use_their_own_exit_code() {
    let tmp = setup();
    let out = redtide(tmp.path(), &["synth", "--set", "synth.bogus=1", "-o", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = redtide(tmp.path(), &["train", "--data", "data", "--set", "train.sampler.batch_size=7", "-o", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

/// A 10x10 map with four labeled positives (the hand-counted fixture of the
/// evaluation module) written as a dataset plus score directory.
fn micro_fixture(dir: &Path, with_labels: bool) {
    let raster = |id: &str| Raster::new(id, 1, 10, 10, vec![0.0; 100]).unwrap();
    let mut test = LabelSet::default();
    if with_labels {
        test.positives.insert("a".into(), vec![(5, 0), (5, 1), (6, 0), (6, 1)]);
    } else {
        test.negative_raster_ids.push("a".into());
    }
    let mut train = LabelSet::default();
    train.positives.insert("t".into(), vec![(1, 1)]);
    let ds = Dataset {
        rasters: BTreeMap::from([("a".to_string(), raster("a")), ("t".to_string(), raster("t"))]),
        train,
        test,
    };
    ds.write(&dir.join("data"), RasterFormat::NativeBinary).unwrap();
    let mut scores = vec![0.1f32; 100];
    scores[..8].fill(0.6);
    scores[50] = 0.9;
    scores[51] = 0.9;
    scores[60] = 0.2;
    scores[61] = 0.3;
    scores[99] = f32::NAN;
    let map = ScoreMap {
        id: "a".into(),
        height: 10,
        width: 10,
        scores,
    };
    std::fs::create_dir_all(dir.join("scores")).unwrap();
    map.save(&dir.join("scores/a.rtr")).unwrap();
}

#[test]
fn eval_summary_matches_hand_counts() {
    let tmp = tempfile::tempdir().unwrap();
    micro_fixture(tmp.path(), true);
    ok(redtide(tmp.path(), &["eval", "--data", "data", "--scores", "scores", "-o", "ev"]));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("ev/summary.json")).unwrap()).unwrap();
    // 95 unlabeled evaluable pixels; the two 0.9 positives beat all of them
    // and the 0.2 and 0.3 positives beat the 87 pixels at 0.1.
    let auc = summary["auc"].as_f64().unwrap();
    assert!((auc - 364.0 / 380.0).abs() < 1e-12, "{auc}");
    assert_eq!(summary["ndpi_at"][0], serde_json::json!([0.25, 1.0]));
    assert_eq!(summary["ndpi_at"][1], serde_json::json!([0.5, 2.0]));
    assert_eq!(summary["positives"], 4);
    let curve = std::fs::read_to_string(tmp.path().join("ev/curve.txt")).unwrap();
    assert!(curve.lines().any(|l| l.starts_with(&format!("{} 0.5 10 ", 0.6f32 as f64))), "{curve}");
}

#[test]
fn eval_without_labels_is_an_undefined_metric() {
    let tmp = tempfile::tempdir().unwrap();
    micro_fixture(tmp.path(), false);
    let out = redtide(tmp.path(), &["eval", "--data", "data", "--scores", "scores", "-o", "ev"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("undefined metric"), "{}", stderr(&out));
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = setup();
    let root = tmp.path().join("root");
    let out = Command::new(env!("CARGO_BIN_EXE_redtide"))
        .args(["synth", "-c", "tiny.toml"])
        .current_dir(tmp.path())
        .env("REDTIDE_OUT", &root)
        .output()
        .unwrap();
    ok(out);
    assert!(root.join("synth/manifest.toml").is_file());
    let out = Command::new(env!("CARGO_BIN_EXE_redtide"))
        .args(["synth", "-c", "tiny.toml", "-o", "named"])
        .current_dir(tmp.path())
        .env("REDTIDE_OUT", &root)
        .output()
        .unwrap();
    ok(out);
    assert!(root.join("named/manifest.toml").is_file());
}
