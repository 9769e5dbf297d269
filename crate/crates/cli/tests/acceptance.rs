//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test -p exact-cli --test acceptance -- 2 7`.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use exact_core::dataset::{attribution_file_name, SplitFractions};
use exact_core::distractor::{generate_distractor_dataset, DistractorConfig};
use exact_core::explainers::{Explainer, ExternalSpec, MethodSpec};
use exact_core::foundation::{read_grid_file, write_grid_file, write_png, Grid, Mask, Rng};
use exact_core::harness::{
    build_challenge, run_challenge, ChallengeManifest, GeneratorConfig, RunOptions, ScoreReport,
};
use exact_core::lesion::{candidate_pools, generate_lesion_dataset, LesionConfig};
use exact_core::metrics::{emd_score, ima, solve_ot, DiscreteMeasurePair, Metric, WeightedPoint};
use exact_core::models::{bce_with_logits, train, ModelBundle, ModelSpec, TrainConfig};
use exact_core::tris::{generate_tris_dataset, BackgroundKind, Scenario, TrisConfig};
use exact_core::Error;

type Outcome = Result<String, String>;

fn err(e: impl Display) -> String {
    e.to_string()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn quick_training(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, ..TrainConfig::default() }
}

fn manifest(id: &str, generator: GeneratorConfig, model: ModelSpec, epochs: usize) -> ChallengeManifest {
    let mut m = ChallengeManifest::new(id, 2024, generator, model);
    m.training = quick_training(epochs);
    m
}

fn tris(scenario: Scenario, background: BackgroundKind, px: usize, n: usize, split: SplitFractions) -> TrisConfig {
    TrisConfig { n_samples: n, split, ..TrisConfig::new(scenario, background, px) }
}

/// Small textured photographs stand-in for the IMAGE background.
fn write_image_corpus(dir: &Path) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(err)?;
    for k in 0..4 {
        let f = 0.05 + 0.03 * k as f64;
        let g = Grid::from_fn(72, 90, |r, c| {
            let (r, c) = (r as f64, c as f64);
            (f * r).sin() * (f * 1.7 * c).cos() + 0.3 * ((r + c) * 0.2).sin() + 0.01 * r
        });
        write_png(&g, dir.join(format!("img{k}.png"))).map_err(err)?;
    }
    Ok(())
}

// 1 ---------------------------------------------------------------------

fn metric_fixed_points(work: &Path) -> Outcome {
    let split = SplitFractions { train: 0.4, val: 0.2, test: 0.4 };
    let corpus = work.join("corpus");
    write_image_corpus(&corpus)?;
    let mut manifests = Vec::new();
    for scenario in [Scenario::Lin, Scenario::Mult, Scenario::Rigid, Scenario::Xor] {
        for background in [BackgroundKind::White, BackgroundKind::Corr, BackgroundKind::Image] {
            let mut cfg = tris(scenario, background, 8, 40, split);
            if background == BackgroundKind::Image {
                cfg.corpus_dir = Some(corpus.clone());
            }
            let id = format!("{scenario:?}-{background:?}").to_lowercase();
            manifests.push(manifest(&id, GeneratorConfig::Tris(cfg), ModelSpec::llr(8, 8), 1));
        }
    }
    let lesion = LesionConfig { image_px: 64, n_samples: 20, pool_per_class: 16, split, ..LesionConfig::default() };
    manifests.push(manifest("lesion", GeneratorConfig::Lesion(lesion), ModelSpec::llr(64, 64), 1));
    let distractor = DistractorConfig { n_samples: 40, split, ..DistractorConfig::default() };
    manifests.push(manifest("distractor", GeneratorConfig::Distractor(distractor), ModelSpec::llr(8, 8), 1));

    let mut worst_emd: f64 = 0.0;
    for m in &manifests {
        let dir = work.join(&m.challenge_id);
        build_challenge(m, &dir).map_err(|e| format!("{}: {e}", m.challenge_id))?;
        let r = run_challenge(&dir, &MethodSpec::Ideal, RunOptions { self_test: true }).map_err(err)?;
        let (p, i, e) = (r.mean(Metric::Precision), r.mean(Metric::Ima), r.mean(Metric::Emd).unwrap_or(f64::NAN));
        ensure(p == Some(1.0) && i == Some(1.0), || format!("{}: precision {p:?}, ima {i:?}", m.challenge_id))?;
        ensure((e - 1.0).abs() <= 1e-9, || format!("{}: emd {e}", m.challenge_id))?;
        worst_emd = worst_emd.max((e - 1.0).abs());
    }
    Ok(format!("{} challenges, precision = IMA = 1 exactly, max |EMD - 1| = {worst_emd:.1e}", manifests.len()))
}

// 2 ---------------------------------------------------------------------

/// Minimum over all basic feasible solutions: every choice of m+n-1 cells
/// whose system can be solved by peeling rows/columns with a single open
/// cell, keeping those with nonnegative flows.
fn brute_force_ot(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let basis = m + n - 1;
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..basis).collect();
    loop {
        let mut flow = vec![f64::NAN; basis];
        let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
        let mut open = basis;
        let mut progress = true;
        while open > 0 && progress {
            progress = false;
            for i in 0..m {
                let left: Vec<usize> = (0..basis).filter(|&k| flow[k].is_nan() && cells[pick[k]].0 == i).collect();
                if left.len() == 1 {
                    let k = left[0];
                    let j = cells[pick[k]].1;
                    flow[k] = ra[i];
                    ra[i] = 0.0;
                    rb[j] -= flow[k];
                    open -= 1;
                    progress = true;
                }
            }
            for j in 0..n {
                let left: Vec<usize> = (0..basis).filter(|&k| flow[k].is_nan() && cells[pick[k]].1 == j).collect();
                if left.len() == 1 {
                    let k = left[0];
                    let i = cells[pick[k]].0;
                    flow[k] = rb[j];
                    rb[j] = 0.0;
                    ra[i] -= flow[k];
                    open -= 1;
                    progress = true;
                }
            }
        }
        let balanced = ra.iter().chain(&rb).all(|r| r.abs() < 1e-12);
        if open == 0 && balanced && flow.iter().all(|&f| f >= -1e-12) {
            let c: f64 = (0..basis).map(|k| flow[k] * cost[cells[pick[k]].0][cells[pick[k]].1]).sum();
            best = best.min(c);
        }
        // Next combination of `basis` cells.
        let total = cells.len();
        let mut k = basis;
        while k > 0 && pick[k - 1] == total - basis + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return best;
        }
        pick[k - 1] += 1;
        for t in k..basis {
            pick[t] = pick[t - 1] + 1;
        }
    }
}

fn ot_exactness(_: &Path) -> Outcome {
    let mut rng = Rng::new(77, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = 1 + rng.below_usize(4);
        let n = 1 + rng.below_usize(4);
        let point = |rng: &mut Rng, w: f64| WeightedPoint { row: rng.below(6) as f64, col: rng.below(6) as f64, weight: w };
        let source: Vec<WeightedPoint> = (0..m).map(|_| { let w = 0.05 + rng.uniform(); point(&mut rng, w) }).collect();
        let mut sink: Vec<WeightedPoint> = (0..n).map(|_| { let w = 0.05 + rng.uniform(); point(&mut rng, w) }).collect();
        let (sa, sb): (f64, f64) = (source.iter().map(|p| p.weight).sum(), sink.iter().map(|p| p.weight).sum());
        sink.iter_mut().for_each(|p| p.weight *= sa / sb);
        let a: Vec<f64> = source.iter().map(|p| p.weight).collect();
        let b: Vec<f64> = sink.iter().map(|p| p.weight).collect();
        let cost: Vec<Vec<f64>> =
            source.iter().map(|s| sink.iter().map(|t| ((s.row - t.row).powi(2) + (s.col - t.col).powi(2)).sqrt()).collect()).collect();
        let oracle = brute_force_ot(&a, &b, &cost);
        let got = solve_ot(&DiscreteMeasurePair { source, sink }).map_err(err)?.cost;
        ensure((got - oracle).abs() <= 1e-9, || format!("{m}x{n}: solver {got} vs oracle {oracle}"))?;
        worst = worst.max((got - oracle).abs());
    }
    let attr = Grid::new(1, 3, vec![1.0, 0.0, 0.0]).map_err(err)?;
    let mask = Mask::new(1, 3, vec![false, true, false]).map_err(err)?;
    let hand = emd_score(&attr, &mask).map_err(err)?;
    ensure(hand == Some(0.5), || format!("1x3 hand case scored {hand:?}"))?;
    Ok(format!("100 instances, max deviation {worst:.1e}; 1x3 case = 0.5"))
}

// 3 ---------------------------------------------------------------------

fn random_baseline(work: &Path) -> Outcome {
    let split = SplitFractions { train: 0.1, val: 0.05, test: 0.85 };
    let mut cfg = tris(Scenario::Lin, BackgroundKind::White, 64, 590, split);
    cfg.sigma_h = Some(0.0);
    let mut m = manifest("random", GeneratorConfig::Tris(cfg), ModelSpec::llr(64, 64), 1);
    m.metrics = vec![Metric::Precision, Metric::Ima];
    m.primary_metric = Metric::Precision;
    let dir = work.join("random");
    let ch = build_challenge(&m, &dir).map_err(err)?;
    let test = ch.test_set().map_err(err)?;
    ensure(test.len() >= 500, || format!("only {} test samples", test.len()))?;
    ensure(test.masks.iter().all(|m| m.count() == 512), || "ground truth is not 512 px".into())?;
    let r = run_challenge(&dir, &MethodSpec::Random { seed: 0 }, RunOptions::default()).map_err(err)?;
    let (p, i) = (r.mean(Metric::Precision).unwrap(), r.mean(Metric::Ima).unwrap());
    ensure((p - 0.125).abs() <= 0.02 && (i - 0.125).abs() <= 0.02, || format!("precision {p:.4}, IMA {i:.4}"))?;
    Ok(format!("{} samples, k/d = 512/4096: precision {p:.4}, IMA {i:.4}", test.len()))
}

// 4 ---------------------------------------------------------------------

fn split_accuracy(model: &ModelBundle, ds: &exact_core::dataset::LabeledDataset) -> Result<f64, String> {
    let idx = &ds.split.test;
    let xs: Vec<Grid> = idx.iter().map(|&i| ds.samples[i].clone()).collect();
    let logits = model.forward(&xs).map_err(err)?;
    let correct = logits.iter().zip(idx).filter(|(&z, &i)| u8::from(z > 0.0) == ds.labels[i]).count();
    Ok(correct as f64 / idx.len() as f64)
}

fn scenario_contract(_: &Path) -> Outcome {
    let split = SplitFractions { train: 0.5, val: 0.1, test: 0.4 };
    let lin = generate_tris_dataset(&TrisConfig { seed: 3, ..tris(Scenario::Lin, BackgroundKind::White, 8, 4000, split) }).map_err(err)?;
    let xor = generate_tris_dataset(&TrisConfig { seed: 3, ..tris(Scenario::Xor, BackgroundKind::White, 8, 4000, split) }).map_err(err)?;
    let cfg = TrainConfig { seed: 3, ..TrainConfig::default() };
    let lin_alpha = TrisConfig::new(Scenario::Lin, BackgroundKind::White, 8).alpha();
    let xor_alpha = TrisConfig::new(Scenario::Xor, BackgroundKind::White, 8).alpha();
    let llr_lin = split_accuracy(&train(&ModelSpec::llr(8, 8), &lin, &cfg).map_err(err)?.bundle, &lin)?;
    let llr_xor = split_accuracy(&train(&ModelSpec::llr(8, 8), &xor, &cfg).map_err(err)?.bundle, &xor)?;
    let mlp_xor = split_accuracy(&train(&ModelSpec::mlp(8, 8), &xor, &cfg).map_err(err)?.bundle, &xor)?;
    let detail = format!(
        "LLR on LIN (alpha {lin_alpha}) {llr_lin:.4}, LLR on XOR (alpha {xor_alpha}) {llr_xor:.4}, MLP on XOR {mlp_xor:.4}"
    );
    ensure(llr_lin >= 0.95 && (0.45..=0.55).contains(&llr_xor) && mlp_xor >= 0.9, || detail.clone())?;
    Ok(detail)
}

// 5 ---------------------------------------------------------------------

fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-4 * analytic.abs().max(numeric.abs()) || diff <= 1e-8
}

fn finite_differences(_: &Path) -> Outcome {
    let mut rng = Rng::new(5, 5);
    let mut checked = 0;
    for spec in [ModelSpec::llr(4, 4), ModelSpec::mlp(4, 4), ModelSpec::cnn(4, 4)] {
        let mut model = ModelBundle::init(spec.clone(), 17).map_err(err)?;
        // Nonzero biases so no unit sits exactly at a ReLU kink.
        for t in &mut model.params {
            t.values.iter_mut().for_each(|v| *v += 0.05 * rng.standard_normal());
        }
        let xs: Vec<Grid> = (0..3).map(|_| Grid::from_fn(4, 4, |_, _| rng.standard_normal())).collect();
        let ys = [0u8, 1, 1];
        let loss = |m: &ModelBundle| -> f64 {
            xs.iter().zip(&ys).map(|(x, &y)| bce_with_logits(m.logit(x).unwrap(), f64::from(y))).sum::<f64>() / 3.0
        };
        let h = 1e-5;
        let g = model.gradients(&xs, &ys).map_err(err)?;
        for k in 0..model.params.len() {
            for i in 0..model.params[k].values.len() {
                let mut plus = model.clone();
                plus.params[k].values[i] += h;
                let mut minus = model.clone();
                minus.params[k].values[i] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let name = &model.params[k].name;
                ensure(close(g.params[k][i], numeric), || format!("{spec:?} {name}[{i}]: {} vs {numeric}", g.params[k][i]))?;
                checked += 1;
            }
        }
        for x in &xs {
            let (_, grad) = model.input_gradient(x).map_err(err)?;
            for i in 0..16 {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp.set(i / 4, i % 4, x.get(i / 4, i % 4) + h);
                xm.set(i / 4, i % 4, x.get(i / 4, i % 4) - h);
                let numeric = (model.logit(&xp).unwrap() - model.logit(&xm).unwrap()) / (2.0 * h);
                ensure(close(grad.values()[i], numeric), || format!("{spec:?} input {i}: {} vs {numeric}", grad.values()[i]))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} partial derivatives within 1e-4 relative"))
}

// 6 ---------------------------------------------------------------------

fn analytic_identities(_: &Path) -> Outcome {
    let model = ModelBundle::init(ModelSpec::llr(8, 8), 8).map_err(err)?;
    let w = model.linear_weights().map_err(err)?;
    let mut rng = Rng::new(6, 6);
    let x = Grid::from_fn(8, 8, |_, _| rng.standard_normal());
    let wx: Vec<f64> = w.values().iter().zip(x.values()).map(|(a, b)| a * b).collect();
    let mut worst: f64 = 0.0;
    let methods = [1, 2, 7, 32, 100]
        .into_iter()
        .map(|steps| MethodSpec::IntegratedGradients { steps, baseline: 0.0 })
        .chain([MethodSpec::Occlusion { patch: Some(1), stride: Some(1), baseline: 0.0 }]);
    for method in methods {
        let attr = Explainer::new(method.clone(), &model, None).map_err(err)?.explain(&x, 0, None).map_err(err)?;
        for (a, e) in attr.values().iter().zip(&wx) {
            ensure((a - e).abs() <= 1e-9, || format!("{method:?}: {a} vs w*x {e}"))?;
            worst = worst.max((a - e).abs());
        }
    }
    let grad = Explainer::new(MethodSpec::Gradient, &model, None).map_err(err)?.explain(&x, 0, None).map_err(err)?;
    let order = |g: &Grid| {
        let mut idx: Vec<usize> = (0..g.len()).collect();
        idx.sort_by(|&a, &b| g.values()[b].abs().total_cmp(&g.values()[a].abs()).then(a.cmp(&b)));
        idx
    };
    ensure(order(&grad) == order(&w), || "gradient ranking differs from |w| ranking".into())?;
    Ok(format!("IG (m = 1..100) and 1x1 occlusion equal w*x within {worst:.1e}; rankings agree"))
}

// 7 ---------------------------------------------------------------------

fn suppressor_direction(_: &Path) -> Outcome {
    let (mut weights_ima, mut pattern_ima) = (0.0, 0.0);
    let seeds = 20;
    for seed in 0..seeds {
        let cfg = DistractorConfig { n_samples: 1000, seed, ..DistractorConfig::default() };
        let ds = generate_distractor_dataset(&cfg).map_err(err)?;
        let model = train(&ModelSpec::llr(8, 8), &ds, &TrainConfig { seed, ..TrainConfig::default() }).map_err(err)?.bundle;
        let training: Vec<Grid> = ds.split.train.iter().map(|&i| ds.samples[i].clone()).collect();
        let mean_ima = |method: MethodSpec| -> Result<f64, String> {
            let ex = Explainer::new(method, &model, Some(&training)).map_err(err)?;
            let mut total = 0.0;
            for &i in &ds.split.test {
                let attr = ex.explain(&ds.samples[i], i, None).map_err(err)?;
                total += ima(&attr, &ds.masks[i]).map_err(err)?.unwrap_or(0.0);
            }
            Ok(total / ds.split.test.len() as f64)
        };
        weights_ima += mean_ima(MethodSpec::LinearWeights)?;
        pattern_ima += mean_ima(MethodSpec::LinearPattern)?;
    }
    let (w, p) = (weights_ima / seeds as f64, pattern_ima / seeds as f64);
    let detail = format!("mean IMA over {seeds} seeds: weights {w:.4}, pattern {p:.4}");
    ensure(w < 0.95 && p >= w + 0.05, || detail.clone())?;
    Ok(detail)
}

// 8 ---------------------------------------------------------------------

fn edge_competitiveness(work: &Path) -> Outcome {
    let split = SplitFractions { train: 0.75, val: 0.15, test: 0.1 };
    let cfg = tris(Scenario::Mult, BackgroundKind::Corr, 64, 400, split);
    let mut m = manifest("mult-corr", GeneratorConfig::Tris(cfg), ModelSpec::cnn(64, 64), 15);
    m.training.patience = 5;
    let dir = work.join("mult-corr");
    let ch = build_challenge(&m, &dir).map_err(err)?;
    let acc = ch.info.model.as_ref().map(|r| r.test_accuracy).unwrap_or(f64::NAN);
    let sobel = run_challenge(&dir, &MethodSpec::Sobel, RunOptions::default()).map_err(err)?;
    let grad = run_challenge(&dir, &MethodSpec::Gradient, RunOptions::default()).map_err(err)?;
    let (s, g) = (sobel.mean(Metric::Emd).unwrap(), grad.mean(Metric::Emd).unwrap());
    let detail = format!("{} test samples, CNN accuracy {acc:.3}: Sobel EMD {s:.4}, gradient EMD {g:.4}", sobel.rows.len());
    ensure(s >= g - 0.1, || detail.clone())?;
    Ok(detail)
}

// 9 ---------------------------------------------------------------------

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
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

fn same_scores(a: &ScoreReport, b: &ScoreReport) -> bool {
    let near = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) => (x - y).abs() <= 1e-9,
        (None, None) => true,
        _ => false,
    };
    a.rows.len() == b.rows.len()
        && a.rows.iter().zip(&b.rows).all(|(r, s)| {
            near(r.precision, s.precision) && near(r.emd, s.emd) && near(r.ima, s.ima) && r.flags == s.flags
        })
        && a.aggregates.keys().eq(b.aggregates.keys())
        && a.aggregates.iter().all(|(k, x)| near(Some(x.mean), Some(b.aggregates[k].mean)))
}

fn determinism(work: &Path) -> Outcome {
    let split = SplitFractions { train: 0.6, val: 0.2, test: 0.2 };
    let manifests = [
        manifest("xor-cnn", GeneratorConfig::Tris(tris(Scenario::Xor, BackgroundKind::Corr, 8, 100, split)), ModelSpec::cnn(8, 8), 5),
        manifest(
            "lesion",
            GeneratorConfig::Lesion(LesionConfig { image_px: 64, n_samples: 30, pool_per_class: 16, split, ..LesionConfig::default() }),
            ModelSpec::mlp(64, 64),
            3,
        ),
        manifest("distractor", GeneratorConfig::Distractor(DistractorConfig { n_samples: 200, split, ..DistractorConfig::default() }), ModelSpec::llr(8, 8), 20),
    ];
    let mut files = 0;
    for m in &manifests {
        let (a, b) = (work.join(format!("{}-a", m.challenge_id)), work.join(format!("{}-b", m.challenge_id)));
        build_challenge(m, &a).map_err(err)?;
        build_challenge(m, &b).map_err(err)?;
        let fa = files_under(&a);
        ensure(fa.len() == files_under(&b).len(), || format!("{}: file inventories differ", m.challenge_id))?;
        for f in &fa {
            let rel = f.strip_prefix(&a).unwrap();
            let same = fs::read(f).map_err(err)? == fs::read(b.join(rel)).map_err(err)?;
            ensure(same, || format!("{}: {} differs", m.challenge_id, rel.display()))?;
        }
        files += fa.len();
        for method in [MethodSpec::Gradient, MethodSpec::integrated_gradients(), MethodSpec::occlusion()] {
            let ra = run_challenge(&a, &method, RunOptions::default()).map_err(err)?;
            let rb = run_challenge(&b, &method, RunOptions::default()).map_err(err)?;
            ensure(same_scores(&ra, &rb), || format!("{}: {} reports differ", m.challenge_id, method.id()))?;
        }
    }
    Ok(format!("{} challenges rebuilt, {files} files bit-identical, 9 report pairs agree", manifests.len()))
}

// 10 --------------------------------------------------------------------

#[cfg(unix)]
fn script(dir: &Path, name: &str, body: &str) -> Result<PathBuf, String> {
    use std::os::unix::fs::PermissionsExt;
    let path = dir.join(name);
    fs::write(&path, format!("#!/bin/sh\n{body}\n")).map_err(err)?;
    fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).map_err(err)?;
    Ok(path)
}

#[cfg(unix)]
fn plugin_protocol(work: &Path) -> Outcome {
    let split = SplitFractions { train: 0.5, val: 0.2, test: 0.3 };
    let m = manifest("plugin", GeneratorConfig::Tris(tris(Scenario::Xor, BackgroundKind::White, 8, 100, split)), ModelSpec::mlp(8, 8), 5);
    let dir = work.join("plugin");
    let ch = build_challenge(&m, &dir).map_err(err)?;
    let external = |exe: PathBuf, timeout_secs: f64| MethodSpec::External(ExternalSpec { executable: exe, timeout_secs });

    let echo = run_challenge(&dir, &external(env!("CARGO_BIN_EXE_exact-echo-plugin").into(), 60.0), RunOptions::default()).map_err(err)?;
    let test = ch.test_set().map_err(err)?;
    for (pos, x) in test.samples.iter().enumerate() {
        let back = read_grid_file(dir.join("runs").join(&echo.run_id).join("attributions").join(attribution_file_name(pos))).map_err(err)?;
        let bits = |g: &Grid| g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure(bits(&back) == bits(x), || format!("echo changed sample {pos}"))?;
    }

    let inproc = run_challenge(&dir, &MethodSpec::Gradient, RunOptions::default()).map_err(err)?;
    let plugged = run_challenge(&dir, &external(env!("CARGO_BIN_EXE_exact-gradient-plugin").into(), 60.0), RunOptions::default()).map_err(err)?;
    ensure(inproc.aggregates == plugged.aggregates && inproc.rows == plugged.rows, || "plug-in gradient differs".into())?;

    let wrong = work.join("wrong.grid");
    write_grid_file(&Grid::zeros(3, 3), &wrong).map_err(err)?;
    let body = format!("for f in \"$2\"/sample_*.grid; do n=$(basename \"$f\" | sed 's/sample_/attr_/'); cp '{}' \"$3/$n\"; done", wrong.display());
    let shaped = script(work, "wrong_shape.sh", &body)?;
    let e = run_challenge(&dir, &external(shaped, 60.0), RunOptions::default()).err();
    ensure(matches!(e, Some(Error::Protocol(_))), || format!("wrong shape gave {e:?}"))?;

    let sleepy = script(work, "sleepy.sh", "sleep 30")?;
    let t = Instant::now();
    let e = run_challenge(&dir, &external(sleepy.clone(), 0.5), RunOptions::default()).err();
    ensure(matches!(e, Some(Error::Timeout(_))) && t.elapsed().as_secs_f64() < 10.0, || format!("sleeper gave {e:?}"))?;

    let status = Command::new(env!("CARGO_BIN_EXE_exact"))
        .args(["run", "--challenge"])
        .arg(&dir)
        .args(["--plugin"])
        .arg(&sleepy)
        .args(["--timeout", "0.3"])
        .output()
        .map_err(err)?
        .status;
    ensure(status.code() == Some(3), || format!("CLI exit status {status} on timeout"))?;
    Ok("echo bit-exact, plug-in gradient == in-process, ProtocolError on shape, TimeoutError (CLI exit 3)".into())
}

#[cfg(not(unix))]
fn plugin_protocol(_: &Path) -> Outcome {
    Err("needs a Unix shell for the misbehaving plug-ins".into())
}

// 11 --------------------------------------------------------------------

fn lesion_pipeline(_: &Path) -> Outcome {
    let cfg = LesionConfig { n_samples: 100, seed: 9, ..LesionConfig::default() };
    let ds = generate_lesion_dataset(&cfg).map_err(err)?;
    let pools = candidate_pools(&cfg).map_err(err)?;
    let (h, w) = ds.dims();
    let (mut min_regular, mut max_irregular) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, meta) in ds.meta.iter().enumerate() {
        let lesions = meta["lesions"].as_array().ok_or("missing lesion list")?;
        ensure((3..=5).contains(&lesions.len()), || format!("sample {i}: {} lesions", lesions.len()))?;
        let class = ds.labels[i] as usize;
        let mut union = Mask::empty(h, w);
        for l in lesions {
            let get = |k: &str| l[k].as_u64().map(|v| v as usize).ok_or(format!("sample {i}: bad {k}"));
            let cand = &pools[class][get("candidate")?];
            let (row, col) = (get("row")?, get("col")?);
            let (ch, cw) = cand.mask.dims();
            let placed = Mask::from_fn(h, w, |r, c| r >= row && c >= col && r < row + ch && c < col + cw && cand.mask.get(r - row, c - col));
            ensure(placed.count() == cand.area, || format!("sample {i}: lesion clipped"))?;
            ensure(!placed.intersects(&union), || format!("sample {i}: lesions overlap"))?;
            // The background is black outside the head.
            ensure(placed.indices().all(|p| ds.samples[i].values()[p] > 0.0), || format!("sample {i}: lesion off the foreground"))?;
            union = union.union(&placed);
            if class == 0 {
                min_regular = min_regular.min(cand.compactness);
            } else {
                max_irregular = max_irregular.max(cand.compactness);
            }
        }
        ensure(union == ds.masks[i], || format!("sample {i}: ground truth differs from lesion support"))?;
    }
    let separation = min_regular - max_irregular;
    ensure(separation >= cfg.gap, || format!("compactness separation {separation:.4} < gap {}", cfg.gap))?;
    Ok(format!("100 samples; regular >= {min_regular:.3}, irregular <= {max_irregular:.3}, separation {separation:.3} >= {}", cfg.gap))
}

// -----------------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn(&Path) -> Outcome); 11] = [
        ("metric fixed points", metric_fixed_points),
        ("OT exactness", ot_exactness),
        ("random-baseline calibration", random_baseline),
        ("scenario design contract", scenario_contract),
        ("gradient engine", finite_differences),
        ("analytic explainer identities", analytic_identities),
        ("suppressor direction", suppressor_direction),
        ("edge-baseline competitiveness", edge_competitiveness),
        ("determinism", determinism),
        ("plug-in protocol", plugin_protocol),
        ("lesion pipeline", lesion_pipeline),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let root = tempfile::tempdir().expect("temporary directory");
    let (mut passed, mut failed) = (0, 0);
    for (k, (name, check)) in criteria.iter().enumerate() {
        let n = k + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let work = root.path().join(format!("c{n}"));
        fs::create_dir_all(&work).expect("work directory");
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(|| check(&work)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("PASS {n:>2} {name}: {detail} [{secs:.1}s]");
            }
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
