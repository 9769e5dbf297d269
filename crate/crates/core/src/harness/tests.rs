use super::*;
use crate::dataset::SplitFractions;
use crate::explainers::ExternalSpec;
use crate::tris::{BackgroundKind, Scenario};

fn small_manifest(id: &str) -> ChallengeManifest {
    let mut cfg = TrisConfig::new(Scenario::Lin, BackgroundKind::White, 8);
    cfg.n_samples = 80;
    cfg.split = SplitFractions { train: 0.5, val: 0.25, test: 0.25 };
    let mut m = ChallengeManifest::new(id, 5, GeneratorConfig::Tris(cfg), ModelSpec::llr(8, 8));
    m.training.epochs = 5;
    m
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

fn log_entry(run: &str, method: &str, emd: f64, ima: f64) -> RunLogEntry {
    RunLogEntry {
        run_id: run.into(),
        challenge_id: "c".into(),
        method: method.into(),
        status: RunStatus::Ok,
        error_class: None,
        message: None,
        means: [("emd".to_string(), emd), ("ima".to_string(), ima)].into_iter().collect(),
        model_accuracy: Some(0.9),
        logged_at: 0,
    }
}

#[test]
fn aggregate_hand_values() {
    let a = aggregate(&[1.0, 3.0, 2.0, 6.0]).unwrap();
    assert_eq!((a.mean, a.median, a.count), (3.0, 2.5, 4));
    assert!((a.std - 3.5f64.sqrt()).abs() < 1e-15);
    assert_eq!(aggregate(&[0.25]).unwrap().median, 0.25);
    assert!(aggregate(&[]).is_none());
}

#[test]
fn leaderboard_ordering_and_best_run_policy() {
    let log = vec![log_entry("r1", "b", 0.7, 0.5), log_entry("r2", "a", 0.9, 0.5), log_entry("r3", "a", 0.8, 0.9)];
    let board = leaderboard_from_log("c", Metric::Emd, &log);
    let order: Vec<_> = board.entries.iter().map(|e| (e.rank, e.method.as_str(), e.best_run.as_str(), e.runs)).collect();
    assert_eq!(order, vec![(1, "a", "r2", 2), (2, "b", "r1", 1)]);

    // Equal EMD: IMA decides, then the name.
    let log = vec![log_entry("r1", "z", 0.5, 0.3), log_entry("r2", "y", 0.5, 0.4), log_entry("r3", "x", 0.5, 0.3)];
    let names: Vec<_> = leaderboard_from_log("c", Metric::Emd, &log).entries.into_iter().map(|e| e.method).collect();
    assert_eq!(names, ["y", "x", "z"]);

    // Failed runs and other challenges never rank.
    let mut failed = log_entry("r4", "w", 1.0, 1.0);
    failed.status = RunStatus::Failed;
    let mut foreign = log_entry("r5", "v", 1.0, 1.0);
    foreign.challenge_id = "other".into();
    assert!(leaderboard_from_log("c", Metric::Emd, &[failed, foreign]).entries.is_empty());
}

#[test]
fn manifest_validation() {
    assert!(small_manifest("ok").validate().is_ok());
    let mut m = small_manifest("bad id");
    assert!(matches!(m.validate(), Err(Error::Config(_))));
    m = small_manifest("x");
    m.metrics = vec![Metric::Ima];
    assert!(matches!(m.validate(), Err(Error::Config(_))));
    m = small_manifest("x");
    m.model = ModelSpec::llr(4, 4);
    assert!(matches!(m.validate(), Err(Error::Config(_))));
    let text = small_manifest("x").canonical_json();
    let back: ChallengeManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(back, small_manifest("x"));
}

#[test]
fn build_layout_privacy_and_integrity() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("c");
    let ch = build_challenge(&small_manifest("c"), &dir).unwrap();
    assert_eq!((ch.info.train_count, ch.info.val_count, ch.info.test_count), (40, 20, 20));
    assert!(ch.info.model.as_ref().unwrap().test_accuracy >= 0.0);
    assert!(!dir.join(".lock").exists());

    for f in files_under(&dir.join("public")) {
        let name = f.to_string_lossy();
        assert!(!name.contains("mask") && !name.contains("meta.jsonl"), "{name}");
        if f.file_name().unwrap() == "provenance.json" {
            let v: serde_json::Value = read_json(&f).unwrap();
            assert!(v["provenance"].is_null() && v["split"].is_null());
        }
    }
    assert!(!dir.join("public/test").exists());
    assert_eq!(Challenge::open(&dir).unwrap().public_training_set().unwrap().len(), 60);

    let text = fs::read_to_string(dir.join("manifest.json")).unwrap();
    fs::write(dir.join("manifest.json"), text.replace("\"seed\": 5", "\"seed\": 6")).unwrap();
    assert!(matches!(Challenge::open(&dir), Err(Error::Integrity(_))));
    fs::write(dir.join("manifest.json"), text).unwrap();
    assert!(Challenge::open(&dir).is_ok());
    assert!(matches!(generate_challenge(&small_manifest("c"), &dir), Err(Error::Store(_))));
}

#[test]
fn rebuild_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    build_challenge(&small_manifest("c"), &a).unwrap();
    build_challenge(&small_manifest("c"), &b).unwrap();
    let fa = files_under(&a);
    assert_eq!(fa.len(), files_under(&b).len());
    for f in fa {
        let rel = f.strip_prefix(&a).unwrap();
        assert_eq!(fs::read(&f).unwrap(), fs::read(b.join(rel)).unwrap(), "{}", rel.display());
    }
}

#[test]
fn runs_scores_and_leaderboard() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("c");
    build_challenge(&small_manifest("c"), &dir).unwrap();

    assert!(matches!(run_challenge(&dir, &MethodSpec::Ideal, RunOptions::default()), Err(Error::Config(_))));
    let ideal = run_challenge(&dir, &MethodSpec::Ideal, RunOptions { self_test: true }).unwrap();
    assert_eq!(ideal.mean(Metric::Precision), Some(1.0));
    assert_eq!(ideal.mean(Metric::Ima), Some(1.0));
    assert!((ideal.mean(Metric::Emd).unwrap() - 1.0).abs() <= 1e-9);
    assert_eq!(ideal.rows.len(), 20);

    let grad = run_challenge(&dir, &MethodSpec::Gradient, RunOptions::default()).unwrap();
    let rows = read_scores_csv(&dir.join("runs").join(&grad.run_id).join("scores.csv")).unwrap();
    assert_eq!(rows, grad.rows);
    assert_eq!(aggregate_rows(&rows, &Metric::ALL), grad.aggregates);
    assert_eq!(ScoreReport::read(&dir, &grad.run_id).unwrap(), grad);

    let missing = MethodSpec::External(ExternalSpec { executable: tmp.path().join("nope"), timeout_secs: 5.0 });
    assert!(matches!(run_challenge(&dir, &missing, RunOptions::default()), Err(Error::ExplainerFailed { .. })));
    assert!(matches!(run_challenge(&dir, &MethodSpec::Occlusion { patch: Some(0), stride: None, baseline: 0.0 }, RunOptions::default()), Err(Error::Config(_))));

    let log = read_run_log(&dir).unwrap();
    let classes: Vec<_> = log.iter().map(|e| e.error_class.as_deref()).collect();
    assert_eq!(classes, [Some("ConfigError"), None, None, Some("ExplainerFailed"), Some("ConfigError")]);
    let board = read_leaderboard(&dir).unwrap();
    let names: Vec<_> = board.entries.iter().map(|e| e.method.as_str()).collect();
    assert_eq!(names, ["ideal", "gradient"]);

    let mut foreign = grad.clone();
    foreign.challenge_id = "other".into();
    assert!(matches!(update_leaderboard(&dir, &foreign), Err(Error::Store(_))));
    assert!(matches!(score_run(&dir, "run-9999"), Err(Error::Store(_))));
}

#[test]
fn lock_excludes_second_writer() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("c");
    build_challenge(&small_manifest("c"), &dir).unwrap();
    let held = StoreLock::acquire(&ChallengeLayout::new(&dir)).unwrap();
    assert!(matches!(run_challenge(&dir, &MethodSpec::Sobel, RunOptions::default()), Err(Error::Store(_))));
    drop(held);
    assert!(run_challenge(&dir, &MethodSpec::Sobel, RunOptions::default()).is_ok());
}

#[test]
fn calibration_stops_at_first_success() {
    let mut cfg = TrisConfig::new(Scenario::Lin, BackgroundKind::White, 8);
    cfg.n_samples = 600;
    let training = TrainConfig::default();
    let cal = calibrate_alpha(&cfg, &ModelSpec::llr(8, 8), &training, &[0.02, 0.9], 0.9).unwrap();
    assert!(cal.points[0].val_accuracy < 0.9, "{cal:?}");
    assert_eq!(cal.alpha, Some(0.9), "{cal:?}");
    assert!(calibrate_alpha(&cfg, &ModelSpec::llr(8, 8), &training, &[0.5, 0.2], 0.9).is_err());
}

#[test]
fn self_test_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let checks = self_test(tmp.path()).unwrap();
    assert_eq!(checks.len(), 6 * 4);
    for c in &checks {
        assert!(c.passed, "{c:?}");
    }
}
