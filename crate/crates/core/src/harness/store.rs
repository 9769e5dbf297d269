//! Run log, leaderboard and the single-writer lock.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{unix_now, Challenge, ChallengeLayout, RunRecord, ScoreReport};
use crate::dataset::{read_json, write_json};
use crate::error::{Error, Result};
use crate::metrics::Metric;

/// Advisory lock: `.lock` is created exclusively and removed on drop.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl StoreLock {
    pub fn acquire(layout: &ChallengeLayout) -> Result<StoreLock> {
        let path = layout.lock();
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(StoreLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(Error::Store(format!(
                "{} is locked by another writer (delete {} if it is stale)",
                layout.root.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(format!("creating {}", path.display()), e)),
        }
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub run_id: String,
    pub challenge_id: String,
    pub method: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Metric name to mean over the test split.
    #[serde(default)]
    pub means: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_accuracy: Option<f64>,
    pub logged_at: u64,
}

impl RunLogEntry {
    pub(super) fn failed(record: &RunRecord, error: &Error) -> Self {
        RunLogEntry {
            run_id: record.run_id.clone(),
            challenge_id: record.challenge_id.clone(),
            method: record.method.clone(),
            status: RunStatus::Failed,
            error_class: Some(error.class().to_string()),
            message: Some(error.to_string()),
            means: BTreeMap::new(),
            model_accuracy: None,
            logged_at: unix_now(),
        }
    }

    fn succeeded(report: &ScoreReport) -> Self {
        RunLogEntry {
            run_id: report.run_id.clone(),
            challenge_id: report.challenge_id.clone(),
            method: report.method.clone(),
            status: RunStatus::Ok,
            error_class: None,
            message: None,
            means: report.aggregates.iter().map(|(k, a)| (k.clone(), a.mean)).collect(),
            model_accuracy: Some(report.model_accuracy),
            logged_at: unix_now(),
        }
    }

    fn mean(&self, metric: Metric) -> f64 {
        self.means.get(metric.name()).copied().unwrap_or(f64::NEG_INFINITY)
    }
}

pub(super) fn append_log(layout: &ChallengeLayout, entry: &RunLogEntry) -> Result<()> {
    let path = layout.run_log();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let line = serde_json::to_string(entry).map_err(|e| Error::json("run log entry", e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(format!("appending to {}", path.display()), e))
}

pub fn read_run_log(dir: &Path) -> Result<Vec<RunLogEntry>> {
    let path = ChallengeLayout::new(dir).run_log();
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path.display().to_string(), e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    pub method: String,
    pub emd: Option<f64>,
    pub ima: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    /// Successful runs of this method.
    pub runs: usize,
    pub best_run: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub challenge_id: String,
    pub primary_metric: Metric,
    pub entries: Vec<LeaderboardEntry>,
}

/// Best successful run per method, ranked by the primary metric's mean,
/// then IMA mean, then method name. A later run replaces the incumbent only
/// if it is strictly better on (primary, IMA).
pub fn leaderboard_from_log(challenge_id: &str, primary: Metric, log: &[RunLogEntry]) -> Leaderboard {
    let key = |e: &RunLogEntry| (e.mean(primary), e.mean(Metric::Ima));
    let better = |a: (f64, f64), b: (f64, f64)| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).is_gt();
    let mut best: BTreeMap<&str, (&RunLogEntry, usize)> = BTreeMap::new();
    for e in log.iter().filter(|e| e.status == RunStatus::Ok && e.challenge_id == challenge_id) {
        match best.get_mut(e.method.as_str()) {
            Some((incumbent, runs)) => {
                *runs += 1;
                if better(key(e), key(incumbent)) {
                    *incumbent = e;
                }
            }
            None => {
                best.insert(&e.method, (e, 1));
            }
        }
    }
    let mut ranked: Vec<(&RunLogEntry, usize)> = best.into_values().collect();
    ranked.sort_by(|(a, _), (b, _)| {
        let (ka, kb) = (key(a), key(b));
        kb.0.total_cmp(&ka.0).then(kb.1.total_cmp(&ka.1)).then_with(|| a.method.cmp(&b.method))
    });
    let entries = ranked
        .into_iter()
        .enumerate()
        .map(|(i, (e, runs))| LeaderboardEntry {
            rank: i + 1,
            method: e.method.clone(),
            emd: e.means.get("emd").copied(),
            ima: e.means.get("ima").copied(),
            precision: e.means.get("precision").copied(),
            accuracy: e.model_accuracy,
            runs,
            best_run: e.run_id.clone(),
        })
        .collect();
    Leaderboard { challenge_id: challenge_id.to_string(), primary_metric: primary, entries }
}

/// Appends the report to the run log and rewrites `leaderboard.json`.
pub fn update_leaderboard(dir: &Path, report: &ScoreReport) -> Result<Leaderboard> {
    let ch = Challenge::open(dir)?;
    if report.challenge_id != ch.info.challenge_id {
        return Err(Error::Store(format!(
            "report belongs to challenge `{}`, not `{}`",
            report.challenge_id, ch.info.challenge_id
        )));
    }
    let _lock = StoreLock::acquire(&ch.layout)?;
    append_log(&ch.layout, &RunLogEntry::succeeded(report))?;
    let board = leaderboard_from_log(&ch.info.challenge_id, ch.manifest.primary_metric, &read_run_log(dir)?);
    write_json(&ch.layout.leaderboard(), &board)?;
    Ok(board)
}

pub fn read_leaderboard(dir: &Path) -> Result<Leaderboard> {
    let ch = Challenge::open(dir)?;
    match read_json(&ch.layout.leaderboard()) {
        Ok(board) => Ok(board),
        Err(_) if !ch.layout.leaderboard().exists() => {
            Ok(Leaderboard { challenge_id: ch.info.challenge_id, primary_metric: ch.manifest.primary_metric, entries: Vec::new() })
        }
        Err(e) => Err(e),
    }
}
