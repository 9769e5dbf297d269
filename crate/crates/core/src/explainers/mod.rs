//! Attribution methods. Each maps a sample to a map of the same size;
//! methods emit signed values and the metrics take magnitudes.

mod edge;
mod plugin;

pub use edge::{edge_baseline, EdgeKind};
pub use plugin::{run_external_explainer, ExternalSpec, PluginDirs, PluginMeta, META_FILE};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foundation::{Grid, Mask, Rng};
use crate::models::{ModelBundle, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum MethodSpec {
    Gradient,
    GradientXInput,
    IntegratedGradients {
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default)]
        baseline: f64,
    },
    Occlusion {
        /// Defaults to 8 px at 64x64, scaled with the image side.
        #[serde(default)]
        patch: Option<usize>,
        #[serde(default)]
        stride: Option<usize>,
        #[serde(default)]
        baseline: f64,
    },
    LinearWeights,
    LinearPattern,
    Sobel,
    Laplace,
    Random {
        #[serde(default)]
        seed: u64,
    },
    /// Uniform indicator of the ground truth. Only valid in self-test runs.
    Ideal,
    External(ExternalSpec),
}

fn default_steps() -> usize {
    32
}

impl MethodSpec {
    pub fn integrated_gradients() -> Self {
        MethodSpec::IntegratedGradients { steps: default_steps(), baseline: 0.0 }
    }

    pub fn occlusion() -> Self {
        MethodSpec::Occlusion { patch: None, stride: None, baseline: 0.0 }
    }

    /// Parses a bare method id with default hyperparameters.
    pub fn from_id(id: &str) -> Result<Self> {
        Ok(match id {
            "gradient" => MethodSpec::Gradient,
            "gradient_x_input" => MethodSpec::GradientXInput,
            "integrated_gradients" => Self::integrated_gradients(),
            "occlusion" => Self::occlusion(),
            "linear_weights" => MethodSpec::LinearWeights,
            "linear_pattern" => MethodSpec::LinearPattern,
            "sobel" => MethodSpec::Sobel,
            "laplace" => MethodSpec::Laplace,
            "random" => MethodSpec::Random { seed: 0 },
            "ideal" => MethodSpec::Ideal,
            other => return Err(Error::Config(format!("unknown method `{other}`"))),
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            MethodSpec::Gradient => "gradient",
            MethodSpec::GradientXInput => "gradient_x_input",
            MethodSpec::IntegratedGradients { .. } => "integrated_gradients",
            MethodSpec::Occlusion { .. } => "occlusion",
            MethodSpec::LinearWeights => "linear_weights",
            MethodSpec::LinearPattern => "linear_pattern",
            MethodSpec::Sobel => "sobel",
            MethodSpec::Laplace => "laplace",
            MethodSpec::Random { .. } => "random",
            MethodSpec::Ideal => "ideal",
            MethodSpec::External(_) => "external",
        }
    }

    pub fn check_compatible(&self, kind: ModelKind) -> Result<()> {
        let linear_only = matches!(self, MethodSpec::LinearWeights | MethodSpec::LinearPattern);
        if linear_only && kind != ModelKind::Llr {
            return Err(Error::MethodCompatibility { method: self.id().into(), model: kind.to_string() });
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        match self {
            MethodSpec::IntegratedGradients { steps: 0, .. } => Err(Error::Config("integrated gradients needs steps >= 1".into())),
            MethodSpec::Occlusion { patch: Some(0), .. } | MethodSpec::Occlusion { stride: Some(0), .. } => {
                Err(Error::Config("occlusion patch and stride must be >= 1".into()))
            }
            MethodSpec::External(_) => Err(Error::Config("external methods run through run_external_explainer".into())),
            _ => Ok(()),
        }
    }
}

/// A method bound to a model and, where needed, to training statistics.
#[derive(Debug, Clone)]
pub struct Explainer<'a> {
    method: MethodSpec,
    model: &'a ModelBundle,
    pattern: Option<Grid>,
}

impl<'a> Explainer<'a> {
    /// `training` is required for `linear_pattern` (its covariance estimate).
    pub fn new(method: MethodSpec, model: &'a ModelBundle, training: Option<&[Grid]>) -> Result<Self> {
        method.validate()?;
        method.check_compatible(model.kind())?;
        let pattern = match method {
            MethodSpec::LinearPattern => {
                let data = training.ok_or_else(|| Error::Config("linear_pattern needs training samples".into()))?;
                Some(linear_pattern(&model.linear_weights()?, data)?)
            }
            _ => None,
        };
        Ok(Explainer { method, model, pattern })
    }

    pub fn method(&self) -> &MethodSpec {
        &self.method
    }

    /// Attribution for one sample. `index` seeds the random baseline and
    /// `mask` feeds the ideal oracle.
    pub fn explain(&self, sample: &Grid, index: usize, mask: Option<&Mask>) -> Result<Grid> {
        let (h, w) = sample.dims();
        if (h, w) != self.model.spec.input_dims() {
            return Err(Error::Shape(format!("sample is {h}x{w} but the model expects {:?}", self.model.spec.input_dims())));
        }
        match &self.method {
            MethodSpec::Gradient => Ok(self.model.input_gradient(sample)?.1),
            MethodSpec::GradientXInput => self.model.input_gradient(sample)?.1.zip_with(sample, |g, x| g * x),
            MethodSpec::IntegratedGradients { steps, baseline } => integrated_gradients(self.model, sample, *steps, *baseline),
            MethodSpec::Occlusion { patch, stride, baseline } => {
                let side = h.max(w);
                let patch = patch.unwrap_or((8 * side / 64).max(1));
                let stride = stride.unwrap_or((4 * side / 64).max(1));
                occlusion(self.model, sample, patch, stride, *baseline)
            }
            MethodSpec::LinearWeights => self.model.linear_weights(),
            MethodSpec::LinearPattern => Ok(self.pattern.clone().expect("prepared in new")),
            MethodSpec::Sobel => Ok(edge_baseline(EdgeKind::Sobel, sample)),
            MethodSpec::Laplace => Ok(edge_baseline(EdgeKind::Laplace, sample)),
            MethodSpec::Random { seed } => Ok(random_baseline(&mut Rng::for_purpose(*seed, "explainers/random", index as u64), h, w)),
            MethodSpec::Ideal => {
                let mask = mask.ok_or_else(|| Error::Config("the ideal oracle needs ground-truth masks".into()))?;
                Ok(mask.to_grid())
            }
            MethodSpec::External(_) => unreachable!("rejected in new"),
        }
    }

    /// Explains every sample; results are independent of the thread count.
    pub fn explain_all(&self, samples: &[Grid], indices: &[usize], masks: Option<&[Mask]>) -> Result<Vec<Grid>> {
        (0..samples.len())
            .into_par_iter()
            .map(|k| self.explain(&samples[k], indices[k], masks.map(|m| &m[k])))
            .collect()
    }
}

/// `(x - x0) * mean_k grad f(x0 + k/m (x - x0))`, right Riemann sum.
pub fn integrated_gradients(model: &ModelBundle, x: &Grid, steps: usize, baseline: f64) -> Result<Grid> {
    let mut acc = vec![0.0; x.len()];
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let point = x.map(|v| baseline + t * (v - baseline));
        let (_, g) = model.input_gradient(&point)?;
        for (a, gv) in acc.iter_mut().zip(g.values()) {
            *a += gv;
        }
    }
    let values = acc.iter().zip(x.values()).map(|(a, v)| a / steps as f64 * (v - baseline)).collect();
    Grid::new(x.height(), x.width(), values)
}

/// Patch start offsets covering `0..n`, always including the last window.
fn patch_starts(n: usize, patch: usize, stride: usize) -> Vec<usize> {
    if patch >= n {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..=n - patch).step_by(stride).collect();
    if *starts.last().unwrap() != n - patch {
        starts.push(n - patch);
    }
    starts
}

/// Logit drop when a patch is set to `baseline`, averaged over the patches
/// covering each pixel.
pub fn occlusion(model: &ModelBundle, x: &Grid, patch: usize, stride: usize, baseline: f64) -> Result<Grid> {
    let (h, w) = x.dims();
    let reference = model.logit(x)?;
    let mut sum = vec![0.0; h * w];
    let mut hits = vec![0u32; h * w];
    let (ph, pw) = (patch.min(h), patch.min(w));
    for r0 in patch_starts(h, ph, stride) {
        for c0 in patch_starts(w, pw, stride) {
            let mut occluded = x.clone();
            for r in r0..r0 + ph {
                for c in c0..c0 + pw {
                    occluded.set(r, c, baseline);
                }
            }
            let drop = reference - model.logit(&occluded)?;
            for r in r0..r0 + ph {
                for c in c0..c0 + pw {
                    sum[r * w + c] += drop;
                    hits[r * w + c] += 1;
                }
            }
        }
    }
    Grid::new(h, w, sum.iter().zip(&hits).map(|(s, &n)| s / f64::from(n)).collect())
}

/// `Cov(X) w` from training samples, computed as `Xcᵀ (Xc w) / (n - 1)`.
pub fn linear_pattern(weights: &Grid, training: &[Grid]) -> Result<Grid> {
    if training.len() < 2 {
        return Err(Error::Config("linear_pattern needs at least two training samples".into()));
    }
    for x in training {
        x.ensure_same_dims(weights)?;
    }
    let d = weights.len();
    let n = training.len() as f64;
    let mut mean = vec![0.0; d];
    for x in training {
        for (m, v) in mean.iter_mut().zip(x.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut out = vec![0.0; d];
    for x in training {
        let proj: f64 = x.values().iter().zip(&mean).zip(weights.values()).map(|((v, m), w)| (v - m) * w).sum();
        for ((o, v), m) in out.iter_mut().zip(x.values()).zip(&mean) {
            *o += (v - m) * proj;
        }
    }
    Grid::new(weights.height(), weights.width(), out.into_iter().map(|o| o / (n - 1.0)).collect())
}

/// I.i.d. uniform values in `[0, 1)`.
pub fn random_baseline(rng: &mut Rng, height: usize, width: usize) -> Grid {
    Grid::from_fn(height, width, |_, _| rng.uniform())
}
