use exact_core::dataset::SplitFractions;
use exact_core::explainers::MethodSpec;
use exact_core::harness::{build_challenge, read_leaderboard, read_run_log, run_challenge, ChallengeManifest, GeneratorConfig, RunOptions};
use exact_core::metrics::Metric;
use exact_core::models::{ModelSpec, TrainConfig};
use exact_core::tris::{BackgroundKind, Scenario, TrisConfig};

fn lin_manifest() -> ChallengeManifest {
    let split = SplitFractions { train: 0.6, val: 0.2, test: 0.2 };
    let cfg = TrisConfig { n_samples: 120, split, ..TrisConfig::new(Scenario::Lin, BackgroundKind::White, 8) };
    let mut m = ChallengeManifest::new("lin-small", 11, GeneratorConfig::Tris(cfg), ModelSpec::llr(8, 8));
    m.training = TrainConfig { epochs: 10, ..TrainConfig::default() };
    m
}

#[test]
fn ranked_runs_follow_their_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("c");
    build_challenge(&lin_manifest(), &dir).unwrap();

    let ideal = run_challenge(&dir, &MethodSpec::Ideal, RunOptions { self_test: true }).unwrap();
    assert_eq!(ideal.mean(Metric::Precision), Some(1.0));
    assert_eq!(ideal.mean(Metric::Ima), Some(1.0));
    assert!((ideal.mean(Metric::Emd).unwrap() - 1.0).abs() < 1e-9);

    let random = run_challenge(&dir, &MethodSpec::Random { seed: 0 }, RunOptions::default()).unwrap();
    let weights = run_challenge(&dir, &MethodSpec::LinearWeights, RunOptions::default()).unwrap();
    let board = read_leaderboard(&dir).unwrap();
    let emd: Vec<f64> = board.entries.iter().map(|e| e.emd.unwrap()).collect();
    assert!(emd.windows(2).all(|p| p[0] >= p[1]), "{emd:?}");
    assert_eq!(board.entries.len(), 3);
    for r in [&ideal, &random, &weights] {
        assert!(board.entries.iter().any(|e| e.best_run == r.run_id));
    }
    assert_eq!(read_run_log(&dir).unwrap().len(), 3);
}

#[test]
fn rebuilding_reproduces_the_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    build_challenge(&lin_manifest(), &a).unwrap();
    build_challenge(&lin_manifest(), &b).unwrap();
    let ra = run_challenge(&a, &MethodSpec::integrated_gradients(), RunOptions::default()).unwrap();
    let rb = run_challenge(&b, &MethodSpec::integrated_gradients(), RunOptions::default()).unwrap();
    assert_eq!(ra.rows, rb.rows);
}
