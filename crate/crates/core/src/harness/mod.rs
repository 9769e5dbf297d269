//! Challenge orchestration: a manifest fixes the data generator, the model
//! and the metrics; explanation methods are then run against the frozen test
//! split and ranked.
//!
//! ```text
//! DIR/manifest.json             canonical manifest
//! DIR/public/train, public/val  samples and labels, no masks
//! DIR/public/model/             trained model bundle
//! DIR/public/PLUGIN.md          plug-in protocol
//! DIR/private/test/             test samples, labels and masks
//! DIR/private/challenge.json    manifest hash, split sizes, model accuracy
//! DIR/runs/<run>/               attributions, scores.csv, report.json
//! DIR/runs.log                  append-only JSON lines
//! DIR/leaderboard.json
//! ```

mod calibrate;
mod selftest;
mod store;

pub use calibrate::{calibrate_alpha, Calibration, CalibrationPoint, ALPHA_GRID};
pub use selftest::{self_test, SelfTestCheck};
pub use store::{
    leaderboard_from_log, read_leaderboard, read_run_log, update_leaderboard, Leaderboard, LeaderboardEntry, RunLogEntry,
    RunStatus, StoreLock,
};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    attribution_file_name, read_json, read_labels, read_samples, write_json, LabeledDataset, Partition, Split,
};
use crate::distractor::{generate_distractor_dataset, DistractorConfig};
use crate::error::{Error, Result};
use crate::explainers::{run_external_explainer, Explainer, MethodSpec, PluginDirs};
use crate::foundation::{read_grid_file, write_grid_file, Grid, Mask};
use crate::lesion::{generate_lesion_dataset, LesionConfig};
use crate::metrics::{evaluate, Metric, MetricResult};
use crate::models::{loss_and_accuracy, train, ModelBundle, ModelSpec, TrainConfig};
use crate::tris::{generate_tris_dataset, TrisConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "EXACT_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "snake_case")]
pub enum GeneratorConfig {
    Tris(TrisConfig),
    Lesion(LesionConfig),
    Distractor(DistractorConfig),
}

impl GeneratorConfig {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorConfig::Tris(_) => "tris",
            GeneratorConfig::Lesion(_) => "lesion",
            GeneratorConfig::Distractor(_) => "distractor",
        }
    }

    pub fn image_px(&self) -> usize {
        match self {
            GeneratorConfig::Tris(c) => c.image_px,
            GeneratorConfig::Lesion(c) => c.image_px,
            GeneratorConfig::Distractor(c) => c.image_px,
        }
    }

    fn with_seed(&self, seed: u64) -> GeneratorConfig {
        let mut out = self.clone();
        match &mut out {
            GeneratorConfig::Tris(c) => c.seed = seed,
            GeneratorConfig::Lesion(c) => c.seed = seed,
            GeneratorConfig::Distractor(c) => c.seed = seed,
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorConfig::Tris(c) => c.validate(),
            GeneratorConfig::Lesion(c) => c.validate(),
            GeneratorConfig::Distractor(c) => c.validate(),
        }
    }

    pub fn generate(&self) -> Result<LabeledDataset> {
        match self {
            GeneratorConfig::Tris(c) => generate_tris_dataset(c),
            GeneratorConfig::Lesion(c) => generate_lesion_dataset(c),
            GeneratorConfig::Distractor(c) => generate_distractor_dataset(c),
        }
    }
}

fn default_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

fn default_primary() -> Metric {
    Metric::Emd
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeManifest {
    pub challenge_id: String,
    /// Data seed; overrides the seed inside the generator config.
    pub seed: u64,
    pub generator: GeneratorConfig,
    pub model: ModelSpec,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default = "default_primary")]
    pub primary_metric: Metric,
}

impl ChallengeManifest {
    pub fn new(challenge_id: impl Into<String>, seed: u64, generator: GeneratorConfig, model: ModelSpec) -> Self {
        ChallengeManifest {
            challenge_id: challenge_id.into(),
            seed,
            generator,
            model,
            training: TrainConfig::default(),
            metrics: default_metrics(),
            primary_metric: default_primary(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let m: ChallengeManifest = read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let id_ok = !self.challenge_id.is_empty()
            && self.challenge_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !id_ok {
            return Err(Error::Config(format!("challenge id `{}` must be non-empty [A-Za-z0-9._-]", self.challenge_id)));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("manifest lists no metrics".into()));
        }
        for (i, m) in self.metrics.iter().enumerate() {
            if self.metrics[..i].contains(m) {
                return Err(Error::Config(format!("metric {} listed twice", m.name())));
            }
        }
        if !self.metrics.contains(&self.primary_metric) {
            return Err(Error::Config(format!("primary metric {} is not in the metric list", self.primary_metric.name())));
        }
        self.generator.validate()?;
        self.training.validate()?;
        let px = self.generator.image_px();
        if self.model.input_dims() != (px, px) {
            return Err(Error::Config(format!(
                "model expects {:?} inputs but the generator makes {px}x{px} images",
                self.model.input_dims()
            )));
        }
        Ok(())
    }

    /// Canonical serialization; its SHA-256 is the manifest hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub kind: String,
    pub parameter_count: usize,
    pub best_epoch: usize,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

/// Private bookkeeping for a built challenge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeInfo {
    pub challenge_id: String,
    pub dataset_id: String,
    pub manifest_sha256: String,
    pub generator: String,
    pub height: usize,
    pub width: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub model: Option<ModelRecord>,
    pub tool_version: String,
}

/// Paths inside a challenge directory.
#[derive(Debug, Clone)]
pub struct ChallengeLayout {
    pub root: PathBuf,
}

impl ChallengeLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ChallengeLayout { root: root.into() }
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
    pub fn public(&self) -> PathBuf {
        self.root.join("public")
    }
    pub fn private(&self) -> PathBuf {
        self.root.join("private")
    }
    pub fn train(&self) -> PathBuf {
        self.public().join("train")
    }
    pub fn val(&self) -> PathBuf {
        self.public().join("val")
    }
    pub fn model(&self) -> PathBuf {
        self.public().join("model")
    }
    pub fn test(&self) -> PathBuf {
        self.private().join("test")
    }
    pub fn info(&self) -> PathBuf {
        self.private().join("challenge.json")
    }
    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }
    pub fn run(&self, run_id: &str) -> PathBuf {
        self.runs().join(run_id)
    }
    pub fn run_log(&self) -> PathBuf {
        self.root.join("runs.log")
    }
    pub fn leaderboard(&self) -> PathBuf {
        self.root.join("leaderboard.json")
    }
    pub fn lock(&self) -> PathBuf {
        self.root.join(".lock")
    }
}

/// A built challenge whose manifest hash has been verified.
#[derive(Debug, Clone)]
pub struct Challenge {
    pub layout: ChallengeLayout,
    pub manifest: ChallengeManifest,
    pub info: ChallengeInfo,
}

impl Challenge {
    pub fn open(dir: &Path) -> Result<Challenge> {
        let layout = ChallengeLayout::new(dir);
        let bytes = fs::read(layout.manifest()).map_err(|e| Error::Store(format!("{}: {e}", layout.manifest().display())))?;
        let info: ChallengeInfo =
            read_json(&layout.info()).map_err(|e| Error::Store(format!("not a built challenge: {e}")))?;
        if sha256_hex(&bytes) != info.manifest_sha256 {
            return Err(Error::Integrity(format!("{} does not match the hash recorded at build time", layout.manifest().display())));
        }
        let manifest: ChallengeManifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::json(layout.manifest().display().to_string(), e))?;
        Ok(Challenge { layout, manifest, info })
    }

    pub fn model(&self) -> Result<ModelBundle> {
        if self.info.model.is_none() {
            return Err(Error::Store(format!("challenge {} has no trained model yet", self.info.challenge_id)));
        }
        ModelBundle::load(&self.layout.model())
    }

    pub fn test_set(&self) -> Result<LabeledDataset> {
        LabeledDataset::read_dir(&self.layout.test())
    }

    /// Train and validation samples and labels as published to users.
    pub fn public_training_set(&self) -> Result<LabeledDataset> {
        let (tx, ty) = read_public(&self.layout.train())?;
        let (vx, vy) = read_public(&self.layout.val())?;
        let (nt, nv) = (tx.len(), vx.len());
        let (h, w) = (self.info.height, self.info.width);
        let ds = LabeledDataset {
            id: self.info.dataset_id.clone(),
            samples: tx.into_iter().chain(vx).collect(),
            labels: ty.into_iter().chain(vy).collect(),
            masks: vec![Mask::empty(h, w); nt + nv],
            split: Split { train: (0..nt).collect(), val: (nt..nt + nv).collect(), test: Vec::new() },
            provenance: serde_json::Value::Null,
            meta: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn read_public(dir: &Path) -> Result<(Vec<Grid>, Vec<u8>)> {
    let header: serde_json::Value = read_json(&dir.join("provenance.json"))?;
    let count = header["count"].as_u64().ok_or_else(|| Error::format(dir, "missing count"))? as usize;
    let samples = read_samples(dir, count)?;
    let labels = read_labels(&dir.join("labels.csv"))?;
    if labels.len() != count {
        return Err(Error::format(dir, format!("{} labels for {count} samples", labels.len())));
    }
    Ok((samples, labels))
}

const PLUGIN_DOC: &str = "# Explainer plug-ins

A plug-in is an executable called as

    plugin MODEL_DIR INPUT_DIR OUTPUT_DIR

- `MODEL_DIR` is the trained model bundle (`model.json` plus one `.grid`
  file per parameter tensor). Treat it as read-only.
- `INPUT_DIR/meta.json` holds `count`, `height`, `width` and `dataset_id`.
- `INPUT_DIR/sample_%06d.grid` are the samples to explain, in order.
- The plug-in writes `OUTPUT_DIR/attr_%06d.grid`, one map per sample with the
  sample's dimensions, and exits 0.

Grid files start with a 24-byte little-endian header: magic `EXCT`, u16
version 1, u16 dtype 1 (f64), u32 height, u32 width and 8 zero bytes. Then
come height*width f64 values in row-major order.

Standard output and error are captured to a log. A run that exceeds its
deadline is killed. Missing or mis-shaped outputs fail the run.
";

/// Writes the manifest, the dataset split into public and private parts and
/// the challenge record. No model yet.
pub fn generate_challenge(manifest: &ChallengeManifest, out: &Path) -> Result<Challenge> {
    manifest.validate()?;
    let layout = ChallengeLayout::new(out);
    if layout.manifest().exists() {
        return Err(Error::Store(format!("{} already holds a challenge", out.display())));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let _lock = StoreLock::acquire(&layout)?;

    let dataset = manifest.generator.with_seed(manifest.seed).generate()?;
    let text = manifest.canonical_json();
    fs::write(layout.manifest(), &text).map_err(|e| Error::io("writing manifest", e))?;

    // Public copies carry neither generator provenance (it would let anyone
    // regenerate the test split) nor per-sample annotations.
    let public = LabeledDataset { provenance: serde_json::Value::Null, meta: Vec::new(), ..dataset.clone() };
    public.write_subset(&layout.train(), dataset.indices(Partition::Train), true, false)?;
    public.write_subset(&layout.val(), dataset.indices(Partition::Val), true, false)?;
    fs::write(layout.public().join("PLUGIN.md"), PLUGIN_DOC).map_err(|e| Error::io("writing PLUGIN.md", e))?;
    dataset.write_subset(&layout.test(), dataset.indices(Partition::Test), true, true)?;

    let (height, width) = dataset.dims();
    let info = ChallengeInfo {
        challenge_id: manifest.challenge_id.clone(),
        dataset_id: dataset.id.clone(),
        manifest_sha256: sha256_hex(text.as_bytes()),
        generator: manifest.generator.name().to_string(),
        height,
        width,
        train_count: dataset.split.train.len(),
        val_count: dataset.split.val.len(),
        test_count: dataset.split.test.len(),
        model: None,
        tool_version: TOOL_VERSION.to_string(),
    };
    write_json(&layout.info(), &info)?;
    Ok(Challenge { layout, manifest: manifest.clone(), info })
}

/// Trains the manifest's model on the public split and records its test
/// accuracy.
pub fn train_challenge(dir: &Path) -> Result<Challenge> {
    let mut ch = Challenge::open(dir)?;
    let _lock = StoreLock::acquire(&ch.layout)?;
    let data = ch.public_training_set()?;
    let outcome = train(&ch.manifest.model, &data, &ch.manifest.training)?;
    let bundle = outcome.bundle;
    bundle.save(&ch.layout.model())?;

    let test = ch.test_set()?;
    let logits = bundle.forward(&test.samples)?;
    let (_, test_accuracy) = loss_and_accuracy(&logits, &test.labels);
    let prov = bundle.provenance.as_ref().expect("trained bundles carry provenance");
    ch.info.model = Some(ModelRecord {
        kind: bundle.kind().to_string(),
        parameter_count: bundle.parameter_count(),
        best_epoch: prov.best_epoch,
        val_accuracy: prov.best.val_accuracy,
        test_accuracy,
    });
    write_json(&ch.layout.info(), &ch.info)?;
    write_json(&ch.layout.private().join("training.json"), &outcome.history)?;
    Ok(ch)
}

pub fn build_challenge(manifest: &ChallengeManifest, out: &Path) -> Result<Challenge> {
    generate_challenge(manifest, out)?;
    train_challenge(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Allows the ground-truth oracle, which reads private masks.
    pub self_test: bool,
}

/// Name under which a method appears in logs and leaderboards.
pub fn method_label(method: &MethodSpec) -> String {
    match method {
        MethodSpec::External(spec) => {
            let stem = spec.executable.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            format!("external:{stem}")
        }
        other => other.id().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub challenge_id: String,
    pub method: String,
    pub method_spec: MethodSpec,
    pub started_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub sample_index: usize,
    pub precision: Option<f64>,
    pub emd: Option<f64>,
    pub ima: Option<f64>,
    pub flags: Vec<String>,
}

impl ScoreRow {
    fn new(sample_index: usize, r: MetricResult) -> Self {
        ScoreRow { sample_index, precision: r.precision, emd: r.emd, ima: r.ima, flags: r.flags }
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Precision => self.precision,
            Metric::Emd => self.emd,
            Metric::Ima => self.ima,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

/// Mean, median and standard deviation, summed in input order.
pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 { sorted[mid] } else { (sorted[mid - 1] + sorted[mid]) / 2.0 };
    Some(Aggregate { mean, median, std: var.sqrt(), count: values.len() })
}

pub fn aggregate_rows(rows: &[ScoreRow], metrics: &[Metric]) -> BTreeMap<String, Aggregate> {
    metrics
        .iter()
        .filter_map(|&m| {
            let vals: Vec<f64> = rows.iter().filter_map(|r| r.get(m)).collect();
            aggregate(&vals).map(|a| (m.name().to_string(), a))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub challenge_id: String,
    pub run_id: String,
    pub method: String,
    pub method_spec: MethodSpec,
    pub rows: Vec<ScoreRow>,
    pub aggregates: BTreeMap<String, Aggregate>,
    pub model_accuracy: f64,
    pub started_at: u64,
    pub finished_at: u64,
    pub tool_version: String,
}

impl ScoreReport {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.aggregates.get(metric.name()).map(|a| a.mean)
    }

    pub fn read(dir: &Path, run_id: &str) -> Result<ScoreReport> {
        read_json(&ChallengeLayout::new(dir).run(run_id).join("report.json"))
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Worker pool honoring `EXACT_THREADS`.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={v} is not a positive integer")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn next_run_id(layout: &ChallengeLayout) -> Result<String> {
    let taken = match fs::read_dir(layout.runs()) {
        Ok(entries) => entries.count(),
        Err(_) => 0,
    };
    Ok(format!("run-{:04}", taken + 1))
}

fn compute_attributions(ch: &Challenge, method: &MethodSpec, run_dir: &Path, opts: RunOptions) -> Result<Vec<Grid>> {
    if matches!(method, MethodSpec::Ideal) && !opts.self_test {
        return Err(Error::Config("the ideal oracle is only available in self-test mode".into()));
    }
    let model = ch.model()?;
    let test = ch.test_set()?;
    if let MethodSpec::External(spec) = method {
        return run_external_explainer(spec, &ch.layout.model(), &test.samples, &ch.info.dataset_id, &PluginDirs::under(&run_dir.join("plugin")));
    }
    let training = match method {
        MethodSpec::LinearPattern => Some(ch.public_training_set()?.samples),
        _ => None,
    };
    let explainer = Explainer::new(method.clone(), &model, training.as_deref())?;
    let indices: Vec<usize> = (0..test.len()).collect();
    let masks = matches!(method, MethodSpec::Ideal).then_some(test.masks.as_slice());
    worker_pool()?.install(|| explainer.explain_all(&test.samples, &indices, masks))
}

/// Computes and stores attributions for every test sample; returns the run id.
/// Failures are appended to the run log before being returned.
pub fn explain_challenge(dir: &Path, method: &MethodSpec, opts: RunOptions) -> Result<String> {
    let ch = Challenge::open(dir)?;
    let _lock = StoreLock::acquire(&ch.layout)?;
    let run_id = next_run_id(&ch.layout)?;
    let run_dir = ch.layout.run(&run_id);
    fs::create_dir_all(run_dir.join("attributions")).map_err(|e| Error::io("creating run directory", e))?;
    let record = RunRecord {
        run_id: run_id.clone(),
        challenge_id: ch.info.challenge_id.clone(),
        method: method_label(method),
        method_spec: method.clone(),
        started_at: unix_now(),
    };
    write_json(&run_dir.join("run.json"), &record)?;
    match compute_attributions(&ch, method, &run_dir, opts) {
        Ok(attrs) => {
            for (pos, a) in attrs.iter().enumerate() {
                write_grid_file(a, run_dir.join("attributions").join(attribution_file_name(pos)))?;
            }
            Ok(run_id)
        }
        Err(e) => {
            store::append_log(&ch.layout, &RunLogEntry::failed(&record, &e))?;
            Err(e)
        }
    }
}

/// Scores a run's stored attributions against the private masks and
/// persists `scores.csv` and `report.json`.
pub fn score_run(dir: &Path, run_id: &str) -> Result<ScoreReport> {
    let ch = Challenge::open(dir)?;
    let _lock = StoreLock::acquire(&ch.layout)?;
    let run_dir = ch.layout.run(run_id);
    let record: RunRecord =
        read_json(&run_dir.join("run.json")).map_err(|e| Error::Store(format!("run {run_id}: {e}")))?;
    let test = ch.test_set()?;
    let attrs: Vec<Grid> = (0..test.len())
        .map(|pos| read_grid_file(run_dir.join("attributions").join(attribution_file_name(pos))))
        .collect::<Result<_>>()
        .map_err(|e| Error::Store(format!("run {run_id} attributions: {e}")))?;
    let metrics = ch.manifest.metrics.clone();
    let rows: Vec<ScoreRow> = worker_pool()?.install(|| {
        use rayon::prelude::*;
        (0..test.len())
            .into_par_iter()
            .map(|i| evaluate(&attrs[i], &test.masks[i], &metrics).map(|r| ScoreRow::new(i, r)))
            .collect::<Result<Vec<_>>>()
    })?;
    let report = ScoreReport {
        challenge_id: ch.info.challenge_id.clone(),
        run_id: run_id.to_string(),
        method: record.method,
        method_spec: record.method_spec,
        aggregates: aggregate_rows(&rows, &metrics),
        rows,
        model_accuracy: ch.info.model.as_ref().map(|m| m.test_accuracy).unwrap_or(f64::NAN),
        started_at: record.started_at,
        finished_at: unix_now(),
        tool_version: TOOL_VERSION.to_string(),
    };
    write_scores_csv(&run_dir.join("scores.csv"), &report.rows)?;
    write_json(&run_dir.join("report.json"), &report)?;
    Ok(report)
}

/// Explain, score and enter the result on the leaderboard.
pub fn run_challenge(dir: &Path, method: &MethodSpec, opts: RunOptions) -> Result<ScoreReport> {
    let run_id = explain_challenge(dir, method, opts)?;
    let report = score_run(dir, &run_id)?;
    update_leaderboard(dir, &report)?;
    Ok(report)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_scores_csv(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let err = |e: csv::Error| Error::Store(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["sample_index", "precision", "emd", "ima", "flags"]).map_err(err)?;
    for r in rows {
        w.write_record([r.sample_index.to_string(), opt_cell(r.precision), opt_cell(r.emd), opt_cell(r.ima), r.flags.join(";")])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let cell = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::format(path, format!("bad number `{s}`")))
        }
    };
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
            if rec.len() != 5 {
                return Err(Error::format(path, "expected 5 columns"));
            }
            Ok(ScoreRow {
                sample_index: rec[0].parse().map_err(|_| Error::format(path, "bad sample_index"))?,
                precision: cell(&rec[1])?,
                emd: cell(&rec[2])?,
                ima: cell(&rec[3])?,
                flags: rec[4].split(';').filter(|s| !s.is_empty()).map(String::from).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
