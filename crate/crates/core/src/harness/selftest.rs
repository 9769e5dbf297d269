//! Oracle and baseline checks over small instances of every generator.

use std::path::Path;

use serde::Serialize;

use super::{build_challenge, run_challenge, ChallengeManifest, GeneratorConfig, RunOptions};
use crate::dataset::SplitFractions;
use crate::distractor::DistractorConfig;
use crate::error::Result;
use crate::explainers::MethodSpec;
use crate::lesion::LesionConfig;
use crate::metrics::Metric;
use crate::models::{ModelSpec, TrainConfig};
use crate::tris::{BackgroundKind, Scenario, TrisConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfTestCheck {
    pub challenge: String,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SelfTestCheck {
    fn new(challenge: &str, method: &str, metric: &str, value: f64, expected: f64, tolerance: f64) -> Self {
        SelfTestCheck {
            challenge: challenge.to_string(),
            method: method.to_string(),
            metric: metric.to_string(),
            value,
            expected,
            tolerance,
            passed: (value - expected).abs() <= tolerance,
        }
    }
}

fn manifests() -> Vec<ChallengeManifest> {
    let split = SplitFractions { train: 0.5, val: 0.2, test: 0.3 };
    let training = TrainConfig { epochs: 10, ..TrainConfig::default() };
    let mut out = Vec::new();
    for scenario in [Scenario::Lin, Scenario::Mult, Scenario::Rigid, Scenario::Xor] {
        let mut cfg = TrisConfig::new(scenario, BackgroundKind::White, 8);
        cfg.n_samples = 100;
        cfg.split = split;
        let id = format!("selftest-tris-{}", format!("{scenario:?}").to_lowercase());
        out.push(ChallengeManifest::new(id, 11, GeneratorConfig::Tris(cfg), ModelSpec::llr(8, 8)));
    }
    let lesion = LesionConfig { image_px: 64, n_samples: 30, split, pool_per_class: 16, ..LesionConfig::default() };
    out.push(ChallengeManifest::new("selftest-lesion", 11, GeneratorConfig::Lesion(lesion), ModelSpec::llr(64, 64)));
    let distractor = DistractorConfig { n_samples: 100, split, ..DistractorConfig::default() };
    out.push(ChallengeManifest::new("selftest-distractor", 11, GeneratorConfig::Distractor(distractor), ModelSpec::llr(8, 8)));
    for m in &mut out {
        m.training = training.clone();
    }
    out
}

/// Builds one small challenge per generator under `work` and checks the
/// oracle fixed points and the random baseline's expected precision.
pub fn self_test(work: &Path) -> Result<Vec<SelfTestCheck>> {
    let mut checks = Vec::new();
    for manifest in manifests() {
        let dir = work.join(&manifest.challenge_id);
        let ch = build_challenge(&manifest, &dir)?;
        let id = manifest.challenge_id.as_str();
        let opts = RunOptions { self_test: true };

        let ideal = run_challenge(&dir, &MethodSpec::Ideal, opts)?;
        for (metric, tol) in [(Metric::Precision, 0.0), (Metric::Ima, 0.0), (Metric::Emd, 1e-9)] {
            checks.push(SelfTestCheck::new(id, "ideal", metric.name(), ideal.mean(metric).unwrap_or(f64::NAN), 1.0, tol));
        }

        // Random top-k precision is hypergeometric with mean k/d per sample.
        let random = run_challenge(&dir, &MethodSpec::Random { seed: 0 }, opts)?;
        let test = ch.test_set()?;
        let d = (ch.info.height * ch.info.width) as f64;
        let n = test.len() as f64;
        let (mut expected, mut var) = (0.0, 0.0);
        for m in &test.masks {
            let k = m.count() as f64;
            expected += k / d;
            var += (k / d) * (1.0 - k / d) * (d - k) / (k * (d - 1.0));
        }
        let value = random.mean(Metric::Precision).unwrap_or(f64::NAN);
        checks.push(SelfTestCheck::new(id, "random", "precision", value, expected / n, 4.0 * var.sqrt() / n));
    }
    Ok(checks)
}
