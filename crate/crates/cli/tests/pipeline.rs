mod support;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use neurocap_cli::grid::{self, ExperimentConfig};
use neurocap_core::analysis;
use neurocap_core::dataset::load_dataset;
use neurocap_core::metrics::{self, MetricReport};
use serde_json::json;

fn neurocap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurocap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = neurocap(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_vec_pretty(&value).unwrap()).unwrap();
    path
}

fn small_synth(dir: &Path) -> PathBuf {
    let cfg = write_config(
        dir,
        "synth.json",
        json!({ "n_categories": 4, "samples_per_category": 2, "test_stimuli_per_category": 1, "test_repetitions": 2 }),
    );
    let data = dir.join("data");
    ok(&["synth-data", "--config", s(&cfg), "--seed", "5", "--out", s(&data)]);
    data
}

#[test]
fn full_chain_runs_and_is_deterministic() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = small_synth(root);
    let (train, test) = (data.join("train"), data.join("test"));
    assert!(data.join("run.json").exists() && data.join("truth.json").exists());

    let pre = write_config(root, "pretrain.json", json!({ "optimizer": { "steps": 60 } }));
    let lm = root.join("lm");
    ok(&["pretrain-lm", "--config", s(&pre), "--data", s(&train), "--seed", "5", "--out", s(&lm)]);
    assert!(lm.join("decoder").join("header.json").exists());

    let tr = write_config(root, "train.json", json!({ "optimizer": { "steps": 40, "batch_size": 8 } }));
    let run = root.join("run");
    ok(&["train", "--config", s(&tr), "--data", s(&train), "--decoder", s(&lm), "--seed", "5", "--out", s(&run)]);
    let log = fs::read_to_string(run.join("train_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 41);

    let (d1, d2) = (root.join("dec1"), root.join("dec2"));
    ok(&["decode", "--model", s(&run), "--data", s(&test), "--out", s(&d1)]);
    ok(&["decode", "--model", s(&run), "--data", s(&test), "--out", s(&d2)]);
    let p1 = fs::read(d1.join("predictions.tsv")).unwrap();
    assert_eq!(p1, fs::read(d2.join("predictions.tsv")).unwrap());
    let rows = metrics::read_predictions(&d1.join("predictions.tsv")).unwrap();
    assert_eq!(rows.len(), 4, "one caption per averaged test stimulus");

    let eval = root.join("eval");
    let line = ok(&["evaluate", "--predictions", s(&d1), "--data", s(&test), "--out", s(&eval)]);
    assert!(line.contains("CIDEr"));
    let report = MetricReport::read_json(&eval.join("report.json")).unwrap();
    assert_eq!(report.n_candidates, 4);
    for v in [report.b1, report.b4, report.rouge_l, report.meteor_ex, report.cider] {
        assert!(v.is_finite() && v >= 0.0);
    }

    let tsne = root.join("tsne");
    ok(&["tsne-export", "--model", s(&run), "--data", s(&test), "--perplexity", "2", "--iterations", "300", "--out", s(&tsne)]);
    let points = analysis::read_tsne_tsv(&tsne.join("tsne.tsv")).unwrap();
    assert_eq!(points.len(), 8);
    assert!(points.iter().all(|p| p.x.is_finite() && p.y.is_finite()));

    let cues = root.join("cues");
    ok(&["visualize-cues", "--model", s(&run), "--data", s(&test), "--out", s(&cues)]);
    let maps = analysis::read_cue_maps(&cues.join("cue_maps.json")).unwrap();
    assert_eq!(maps.len(), 8);
    for m in &maps {
        assert_eq!(m.grid.len(), m.grid_size);
        assert!(m.grid.iter().all(|row| row.len() == m.grid_size));
        assert_eq!(m.mask.len(), m.grid_size);
    }
    for stage in [&lm, &run, &d1, &eval, &tsne, &cues] {
        assert!(stage.join("run.json").exists(), "{} lacks a run manifest", stage.display());
    }
    assert!(start.elapsed().as_secs() < 300);
}

#[test]
fn references_score_perfectly_and_order_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let data = support::tiny_data(dir.path(), 2);
    let test = data.test;
    let mut rows: Vec<(String, String)> = test
        .samples
        .iter()
        .map(|s| (s.sample_id.clone(), test.vocab.decode(s.caption.ids())))
        .collect();
    let preds = dir.path().join("refs.tsv");
    metrics::write_predictions(&preds, &rows).unwrap();
    let out = dir.path().join("eval");
    ok(&["evaluate", "--predictions", s(&preds), "--data", s(&data.test_manifest), "--out", s(&out)]);
    let report = MetricReport::read_json(&out.join("report.json")).unwrap();
    assert!((report.b1 - 100.0).abs() < 1e-9);
    assert!((report.b4 - 100.0).abs() < 1e-9);
    assert!((report.rouge_l - 100.0).abs() < 1e-9);
    assert!(report.meteor_ex > 90.0 && report.meteor_ex < 100.0, "fragmentation penalty keeps METEOR-ex below 100");

    rows.reverse();
    let shuffled = dir.path().join("shuffled.tsv");
    metrics::write_predictions(&shuffled, &rows).unwrap();
    let out2 = dir.path().join("eval2");
    ok(&["evaluate", "--predictions", s(&shuffled), "--data", s(&data.test_manifest), "--out", s(&out2)]);
    assert_eq!(
        fs::read(out.join("report.json")).unwrap(),
        fs::read(out2.join("report.json")).unwrap()
    );
}

#[test]
fn missing_artifacts_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let data = support::tiny_data(dir.path(), 3);
    let gone = dir.path().join("no-such-model");
    let out = neurocap(&["decode", "--model", s(&gone), "--data", s(&data.test_manifest), "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no-such-model"), "{err}");

    let out = neurocap(&["pretrain-lm", "--data", s(&dir.path().join("nowhere")), "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn synth_data_is_reproducible_from_the_cli() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = small_synth(a.path());
    let db = small_synth(b.path());
    let ta = load_dataset(&da.join("train").join("manifest.json")).unwrap();
    let tb = load_dataset(&db.join("train").join("manifest.json")).unwrap();
    assert_eq!(ta.fingerprint, tb.fingerprint);
    assert_eq!(ta, tb);
}

#[test]
fn variant_grid_resumes_completed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.synth = support::tiny_synth();
    cfg.pretrain.optimizer.steps = 10;
    cfg.train.optimizer.steps = 3;
    cfg.train.optimizer.batch_size = 4;
    let first = grid::run_variant_grid(&cfg, None, None, 1, dir.path()).unwrap();
    assert!(first.iter().all(|r| !r.reused));

    fs::remove_dir_all(dir.path().join("B-8")).unwrap();
    let second = grid::run_variant_grid(&cfg, None, None, 1, dir.path()).unwrap();
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(b.reused, b.label != "B/8", "{}", b.label);
        assert_eq!(a.scores, b.scores, "{}", a.label);
        assert_eq!(a.trainable_params, b.trainable_params);
    }
    let tsv = fs::read_to_string(dir.path().join("grid.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 10);
}
