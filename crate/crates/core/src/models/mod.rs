//! Reference classifiers with a small reverse-mode engine, a deterministic
//! trainer and an on-disk bundle format.

mod engine;
mod spec;
mod train;

pub use spec::{Activation, Conv, ConvSpec, Layer, ModelKind, ModelSpec, ParamShape};
pub use train::{loss_and_accuracy, train, EpochRecord, Optimizer, TrainConfig, TrainOutcome, TrainingProvenance};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json};
use crate::error::{Error, Result};
use crate::foundation::{read_grid_file, write_grid_file, Grid, Rng};

/// Bundle layout version written to `model.json`.
pub const BUNDLE_VERSION: u32 = 1;
pub const DESCRIPTOR_FILE: &str = "model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl AsRef<[f64]> for Tensor {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub spec: ModelSpec,
    pub params: Vec<Tensor>,
    pub provenance: Option<TrainingProvenance>,
    layers: Vec<Layer>,
}

/// `log(1 + e^z) - y z`, stable for large `|z|`.
pub fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + libm::log1p(libm::exp(-z.abs()))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Mean binary cross-entropy over the batch.
    pub loss: f64,
    /// Gradient of the mean loss, one buffer per parameter tensor.
    pub params: Vec<Vec<f64>>,
    /// Gradient of the mean loss with respect to each input.
    pub inputs: Vec<Grid>,
    pub logits: Vec<f64>,
}

impl ModelBundle {
    /// Glorot-uniform weights and zero biases, drawn from `seed`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        let (layers, shapes) = spec.compile()?;
        let mut rng = Rng::for_purpose(seed, "models/init", 0);
        let params = shapes
            .into_iter()
            .map(|s| {
                let values = if s.name.ends_with(".bias") {
                    vec![0.0; s.len()]
                } else {
                    let fan_out = s.shape[0] * s.shape[2..].iter().product::<usize>();
                    let limit = (6.0 / (s.fan_in() + fan_out) as f64).sqrt();
                    (0..s.len()).map(|_| (2.0 * rng.uniform() - 1.0) * limit).collect()
                };
                Tensor { name: s.name, shape: s.shape, values }
            })
            .collect();
        Ok(ModelBundle { spec, params, provenance: None, layers })
    }

    pub fn from_tensors(spec: ModelSpec, params: Vec<Tensor>) -> Result<Self> {
        let (layers, shapes) = spec.compile()?;
        if shapes.len() != params.len() {
            return Err(Error::Shape(format!("{} parameter tensors for a spec that needs {}", params.len(), shapes.len())));
        }
        for (s, t) in shapes.iter().zip(&params) {
            if s.name != t.name || s.shape != t.shape || t.values.len() != s.len() {
                return Err(Error::Shape(format!("tensor {} {:?} does not match {} {:?}", t.name, t.shape, s.name, s.shape)));
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("tensor {} holds non-finite values", t.name)));
            }
        }
        Ok(ModelBundle { spec, params, provenance: None, layers })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|t| t.values.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|t| t.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|t| t.name == name)
    }

    pub(crate) fn buffers(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|t| t.values.clone()).collect()
    }

    pub(crate) fn set_buffers(&mut self, buffers: &[Vec<f64>]) {
        for (t, b) in self.params.iter_mut().zip(buffers) {
            t.values.copy_from_slice(b);
        }
    }

    fn check_input(&self, x: &Grid) -> Result<()> {
        let dims = self.spec.input_dims();
        if x.dims() != dims {
            return Err(Error::Shape(format!("input is {:?} but the model expects {dims:?}", x.dims())));
        }
        Ok(())
    }

    pub fn logit(&self, x: &Grid) -> Result<f64> {
        self.check_input(x)?;
        Ok(engine::forward(&self.layers, &self.params, x.values()).logit())
    }

    pub fn forward(&self, batch: &[Grid]) -> Result<Vec<f64>> {
        batch.iter().map(|x| self.logit(x)).collect()
    }

    /// Logit and its gradient with respect to the input.
    pub fn input_gradient(&self, x: &Grid) -> Result<(f64, Grid)> {
        self.check_input(x)?;
        let trace = engine::forward(&self.layers, &self.params, x.values());
        let g = engine::backward(&self.layers, &self.params, &trace, 1.0, None);
        Ok((trace.logit(), Grid::new(x.height(), x.width(), g)?))
    }

    /// Exact gradients of the mean binary cross-entropy.
    pub fn gradients(&self, batch: &[Grid], labels: &[u8]) -> Result<Gradients> {
        gradients_with(&self.layers, &self.params, batch, labels, self.spec.input_dims())
    }

    /// Weight map of a linear model.
    pub fn linear_weights(&self) -> Result<Grid> {
        if self.kind() != ModelKind::Llr {
            return Err(Error::MethodCompatibility { method: "linear_weights".into(), model: self.kind().to_string() });
        }
        let (h, w) = self.spec.input_dims();
        Grid::new(h, w, self.params[0].values.clone())
    }

    pub fn linear_bias(&self) -> Result<f64> {
        self.linear_weights()?;
        Ok(self.params[1].values[0])
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
        let mut entries = Vec::new();
        for t in &self.params {
            let file = format!("{}.grid", t.name);
            let rows = t.shape[0];
            let cols = t.values.len() / rows;
            write_grid_file(&Grid::new(rows, cols, t.values.clone())?, &dir.join(&file))?;
            entries.push(TensorEntry { name: t.name.clone(), shape: t.shape.clone(), file });
        }
        let descriptor = Descriptor {
            format_version: BUNDLE_VERSION,
            spec: self.spec.clone(),
            parameter_count: self.parameter_count(),
            tensors: entries,
            provenance: self.provenance.clone(),
        };
        write_json(&dir.join(DESCRIPTOR_FILE), &descriptor)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(DESCRIPTOR_FILE);
        let descriptor: Descriptor = read_json(&path)?;
        if descriptor.format_version != BUNDLE_VERSION {
            return Err(Error::format(&path, format!("unsupported bundle version {}", descriptor.format_version)));
        }
        let mut params = Vec::new();
        for e in &descriptor.tensors {
            let file = dir.join(&e.file);
            if !file.is_file() {
                return Err(Error::format(&path, format!("weights file {} is missing", e.file)));
            }
            let grid = read_grid_file(&file)?;
            let len: usize = e.shape.iter().product();
            if e.shape.is_empty() || grid.height() != e.shape[0] || grid.len() != len {
                return Err(Error::format(&file, format!("grid is {:?} but the descriptor says {:?}", grid.dims(), e.shape)));
            }
            params.push(Tensor { name: e.name.clone(), shape: e.shape.clone(), values: grid.into_values() });
        }
        let mut bundle = ModelBundle::from_tensors(descriptor.spec, params).map_err(|err| Error::format(&path, err.to_string()))?;
        bundle.provenance = descriptor.provenance;
        Ok(bundle)
    }
}

pub(crate) fn gradients_with<P: AsRef<[f64]>>(
    layers: &[Layer],
    params: &[P],
    batch: &[Grid],
    labels: &[u8],
    dims: (usize, usize),
) -> Result<Gradients> {
    let raw = raw_gradients(layers, params, batch, labels, dims)?;
    let inputs = raw
        .inputs
        .into_iter()
        .map(|g| Grid::new(dims.0, dims.1, g))
        .collect::<Result<_>>()?;
    Ok(Gradients { loss: raw.loss, params: raw.params, inputs, logits: raw.logits })
}

pub(crate) struct RawGradients {
    pub loss: f64,
    pub params: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

/// Like [`gradients_with`] but without validating the values, so training
/// can report divergence itself.
pub(crate) fn raw_gradients<P: AsRef<[f64]>>(
    layers: &[Layer],
    params: &[P],
    batch: &[Grid],
    labels: &[u8],
    dims: (usize, usize),
) -> Result<RawGradients> {
    if batch.len() != labels.len() || batch.is_empty() {
        return Err(Error::Shape(format!("{} inputs with {} labels", batch.len(), labels.len())));
    }
    let n = batch.len() as f64;
    let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.as_ref().len()]).collect();
    let mut loss = 0.0;
    let mut inputs = Vec::with_capacity(batch.len());
    let mut logits = Vec::with_capacity(batch.len());
    for (x, &y) in batch.iter().zip(labels) {
        if x.dims() != dims {
            return Err(Error::Shape(format!("input is {:?} but the model expects {dims:?}", x.dims())));
        }
        let trace = engine::forward(layers, params, x.values());
        let z = trace.logit();
        logits.push(z);
        let y = f64::from(y);
        loss += bce_with_logits(z, y);
        inputs.push(engine::backward(layers, params, &trace, (sigmoid(z) - y) / n, Some(&mut grads)));
    }
    Ok(RawGradients { loss: loss / n, params: grads, inputs, logits })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Descriptor {
    format_version: u32,
    spec: ModelSpec,
    parameter_count: usize,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    provenance: Option<TrainingProvenance>,
}

impl ModelBundle {
    pub(crate) fn layers(&self) -> &[Layer] {
        &self.layers
    }
}
