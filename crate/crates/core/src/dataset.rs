//! Labeled datasets with per-sample ground truth, and their on-disk layout.
//!
//! ```text
//! DIR/provenance.json      generator config, seed, dataset id, split
//! DIR/labels.csv           index,label
//! DIR/samples/sample_%06d.grid
//! DIR/masks/mask_%06d.grid
//! DIR/meta.jsonl           optional per-sample annotations
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::foundation::{read_grid_file, write_grid_file, Grid, Mask, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.8, val: 0.1, test: 0.1 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {parts:?} must lie in [0,1] and sum to 1")));
        }
        Ok(())
    }
}

/// Disjoint, exhaustive index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded random assignment; sizes are `round(n*train)`, `round(n*val)`
    /// and the remainder. Each index set is sorted.
    pub fn assign(n: usize, fractions: SplitFractions, seed: u64) -> Result<Split> {
        fractions.validate()?;
        let n_train = ((n as f64) * fractions.train).round() as usize;
        let n_train = n_train.min(n);
        let n_val = (((n as f64) * fractions.val).round() as usize).min(n - n_train);
        let mut order: Vec<usize> = (0..n).collect();
        Rng::for_purpose(seed, "split", 0).shuffle(&mut order);
        let mut train = order[..n_train].to_vec();
        let mut val = order[n_train..n_train + n_val].to_vec();
        let mut test = order[n_train + n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Ok(Split { train, val, test })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Partition {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub id: String,
    pub samples: Vec<Grid>,
    pub labels: Vec<u8>,
    pub masks: Vec<Mask>,
    pub split: Split,
    pub provenance: serde_json::Value,
    pub meta: Vec<serde_json::Value>,
}

impl LabeledDataset {
    /// Assemble a dataset; the id is a content hash of the provenance.
    pub fn new(
        samples: Vec<Grid>,
        labels: Vec<u8>,
        masks: Vec<Mask>,
        split: Split,
        provenance: serde_json::Value,
        meta: Vec<serde_json::Value>,
    ) -> Result<Self> {
        let id = dataset_id(&provenance);
        let ds = LabeledDataset { id, samples, labels, masks, split, provenance, meta };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.samples.first().map(Grid::dims).unwrap_or((0, 0))
    }

    pub fn indices(&self, part: Partition) -> &[usize] {
        match part {
            Partition::Train => &self.split.train,
            Partition::Val => &self.split.val,
            Partition::Test => &self.split.test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.samples.len();
        if self.labels.len() != n || self.masks.len() != n || !(self.meta.is_empty() || self.meta.len() == n) {
            return Err(Error::Shape("samples, labels, masks and meta differ in length".into()));
        }
        let dims = self.dims();
        for (i, (s, m)) in self.samples.iter().zip(&self.masks).enumerate() {
            if s.dims() != dims || m.dims() != dims {
                return Err(Error::Shape(format!("sample {i} has inconsistent dimensions")));
            }
            if s.max_abs() > 1.0 {
                return Err(Error::Shape(format!("sample {i} leaves [-1, 1]")));
            }
        }
        if self.labels.iter().any(|&l| l > 1) {
            return Err(Error::Shape("labels must be 0 or 1".into()));
        }
        let mut seen = vec![false; n];
        for &i in self.split.train.iter().chain(&self.split.val).chain(&self.split.test) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Shape(format!("split index {i} is out of range or repeated")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Shape("split does not cover every sample".into()));
        }
        Ok(())
    }

    /// Write the full dataset (all samples and masks) to `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.write_subset(dir, &all, true, true)
    }

    /// Write a subset of samples. Indices in the files are positions within
    /// `indices`; the original index is kept in `labels.csv`'s `source` column.
    pub fn write_subset(&self, dir: &Path, indices: &[usize], with_labels: bool, with_masks: bool) -> Result<()> {
        let samples_dir = dir.join("samples");
        fs::create_dir_all(&samples_dir).map_err(|e| Error::io(format!("creating {}", samples_dir.display()), e))?;
        for (pos, &i) in indices.iter().enumerate() {
            write_grid_file(&self.samples[i], samples_dir.join(sample_file_name(pos)))?;
        }
        if with_labels {
            let mut w = csv::Writer::from_path(dir.join("labels.csv"))
                .map_err(|e| Error::Store(format!("labels.csv: {e}")))?;
            w.write_record(["index", "label", "source"]).map_err(csv_err)?;
            for (pos, &i) in indices.iter().enumerate() {
                w.write_record([pos.to_string(), self.labels[i].to_string(), i.to_string()]).map_err(csv_err)?;
            }
            w.flush().map_err(|e| Error::io("labels.csv", e))?;
        }
        if with_masks {
            let masks_dir = dir.join("masks");
            fs::create_dir_all(&masks_dir).map_err(|e| Error::io(format!("creating {}", masks_dir.display()), e))?;
            for (pos, &i) in indices.iter().enumerate() {
                write_grid_file(&self.masks[i].to_grid(), masks_dir.join(mask_file_name(pos)))?;
            }
            if !self.meta.is_empty() {
                let mut f = fs::File::create(dir.join("meta.jsonl")).map_err(|e| Error::io("meta.jsonl", e))?;
                for &i in indices {
                    writeln!(f, "{}", self.meta[i]).map_err(|e| Error::io("meta.jsonl", e))?;
                }
            }
        }
        let header = serde_json::json!({
            "dataset_id": self.id,
            "count": indices.len(),
            "height": self.dims().0,
            "width": self.dims().1,
            "provenance": self.provenance,
            "split": if indices.len() == self.len() { serde_json::to_value(&self.split).unwrap() } else { serde_json::Value::Null },
        });
        write_json(&dir.join("provenance.json"), &header)
    }

    pub fn read_dir(dir: &Path) -> Result<LabeledDataset> {
        let header: serde_json::Value = read_json(&dir.join("provenance.json"))?;
        let count = header["count"].as_u64().ok_or_else(|| Error::format(dir, "missing count"))? as usize;
        let mut samples = Vec::with_capacity(count);
        let mut masks = Vec::with_capacity(count);
        for pos in 0..count {
            samples.push(read_grid_file(dir.join("samples").join(sample_file_name(pos)))?);
            masks.push(read_mask_file(&dir.join("masks").join(mask_file_name(pos)))?);
        }
        let labels = read_labels(&dir.join("labels.csv"))?;
        let meta = match fs::read_to_string(dir.join("meta.jsonl")) {
            Ok(text) => text
                .lines()
                .map(|l| serde_json::from_str(l).map_err(|e| Error::json("meta.jsonl", e)))
                .collect::<Result<Vec<_>>>()?,
            Err(_) => Vec::new(),
        };
        let split = match header.get("split") {
            Some(v) if !v.is_null() => serde_json::from_value(v.clone()).map_err(|e| Error::json("split", e))?,
            _ => Split { train: Vec::new(), val: Vec::new(), test: (0..count).collect() },
        };
        let ds = LabeledDataset {
            id: header["dataset_id"].as_str().unwrap_or_default().to_string(),
            samples,
            labels,
            masks,
            split,
            provenance: header["provenance"].clone(),
            meta,
        };
        ds.validate()?;
        Ok(ds)
    }
}

pub fn sample_file_name(pos: usize) -> String {
    format!("sample_{pos:06}.grid")
}

pub fn mask_file_name(pos: usize) -> String {
    format!("mask_{pos:06}.grid")
}

pub fn attribution_file_name(pos: usize) -> String {
    format!("attr_{pos:06}.grid")
}

pub fn dataset_id(provenance: &serde_json::Value) -> String {
    let digest = Sha256::digest(provenance.to_string().as_bytes());
    hex::encode(&digest[..6])
}

pub fn read_mask_file(path: &Path) -> Result<Mask> {
    let g = read_grid_file(path)?;
    if g.values().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::format(path, "mask values must be 0 or 1"));
    }
    Ok(g.support())
}

/// Read samples `sample_000000.grid ..` from `dir/samples` (or `dir` itself).
pub fn read_samples(dir: &Path, count: usize) -> Result<Vec<Grid>> {
    let base = if dir.join("samples").is_dir() { dir.join("samples") } else { dir.to_path_buf() };
    (0..count).map(|pos| read_grid_file(base.join(sample_file_name(pos)))).collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut labels = Vec::new();
    for (expected, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let idx: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| Error::format(path, "bad index"))?;
        let label: u8 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| Error::format(path, "bad label"))?;
        if idx != expected || label > 1 {
            return Err(Error::format(path, format!("row {expected}: index {idx}, label {label}")));
        }
        labels.push(label);
    }
    Ok(labels)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Store(format!("csv: {e}"))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}
