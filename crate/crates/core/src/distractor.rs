//! Linear suppressor benchmark: `x = y a + z d + noise` where the distractor
//! activity `z` is independent of the label but shares pixels with `a`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Split, SplitFractions};
use crate::error::{Error, Result};
use crate::foundation::{global_scale, Grid, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractorConfig {
    #[serde(default = "default_px")]
    pub image_px: usize,
    /// Blob centers `(row, col)` in pixel-index coordinates.
    #[serde(default = "default_signal_centers")]
    pub signal_centers: Vec<(f64, f64)>,
    #[serde(default = "default_distractor_centers")]
    pub distractor_centers: Vec<(f64, f64)>,
    #[serde(default = "default_blob_sigma")]
    pub blob_sigma: f64,
    /// Blob support radius; values beyond it are exactly zero.
    #[serde(default = "default_blob_radius")]
    pub blob_radius: f64,
    #[serde(default = "one")]
    pub signal_amplitude: f64,
    #[serde(default = "one")]
    pub distractor_amplitude: f64,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default = "default_n")]
    pub n_samples: usize,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub seed: u64,
}

fn default_px() -> usize {
    8
}

fn default_signal_centers() -> Vec<(f64, f64)> {
    vec![(1.5, 1.5), (5.5, 1.5)]
}

fn default_distractor_centers() -> Vec<(f64, f64)> {
    vec![(1.5, 1.5), (1.5, 5.5)]
}

fn default_blob_sigma() -> f64 {
    0.8
}

fn default_blob_radius() -> f64 {
    1.6
}

fn one() -> f64 {
    1.0
}

fn default_noise() -> f64 {
    0.2
}

fn default_n() -> usize {
    1000
}

impl Default for DistractorConfig {
    fn default() -> Self {
        DistractorConfig {
            image_px: default_px(),
            signal_centers: default_signal_centers(),
            distractor_centers: default_distractor_centers(),
            blob_sigma: default_blob_sigma(),
            blob_radius: default_blob_radius(),
            signal_amplitude: 1.0,
            distractor_amplitude: 1.0,
            noise_sigma: default_noise(),
            n_samples: default_n(),
            split: SplitFractions::default(),
            seed: 0,
        }
    }
}

/// Sum of truncated Gaussian bumps, scaled so the peak equals `amplitude`.
pub fn blob_pattern(image_px: usize, centers: &[(f64, f64)], sigma: f64, radius: f64, amplitude: f64) -> Grid {
    let g = Grid::from_fn(image_px, image_px, |r, c| {
        centers
            .iter()
            .map(|&(cr, cc)| {
                let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
                if d2 <= radius * radius {
                    libm::exp(-d2 / (2.0 * sigma * sigma))
                } else {
                    0.0
                }
            })
            .sum()
    });
    let peak = g.max_abs();
    if peak == 0.0 {
        g
    } else {
        g.map(|v| amplitude * v / peak)
    }
}

impl DistractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_px == 0 || self.n_samples < 2 {
            return Err(Error::Config("distractor data needs image_px >= 1 and at least two samples".into()));
        }
        let positive = [self.blob_sigma, self.blob_radius, self.signal_amplitude];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("blob sigma, radius and signal amplitude must be positive".into()));
        }
        if !(self.distractor_amplitude >= 0.0 && self.noise_sigma >= 0.0) {
            return Err(Error::Config("distractor amplitude and noise sigma must be >= 0".into()));
        }
        self.split.validate()
    }

    pub fn signal(&self) -> Grid {
        blob_pattern(self.image_px, &self.signal_centers, self.blob_sigma, self.blob_radius, self.signal_amplitude)
    }

    pub fn distractor(&self) -> Grid {
        blob_pattern(self.image_px, &self.distractor_centers, self.blob_sigma, self.blob_radius, self.distractor_amplitude)
    }
}

pub fn generate_distractor_dataset(config: &DistractorConfig) -> Result<LabeledDataset> {
    config.validate()?;
    let a = config.signal();
    let d = config.distractor();
    if a.support().count() == 0 {
        return Err(Error::Config("signal pattern is empty".into()));
    }
    let n = config.image_px;
    let rows: Vec<(Grid, u8, f64)> = (0..config.n_samples)
        .into_par_iter()
        .map(|i| {
            let label = (i % 2) as u8;
            let y = 2.0 * f64::from(label) - 1.0;
            let z = Rng::for_purpose(config.seed, "distractor/z", i as u64).standard_normal();
            let mut noise = Rng::for_purpose(config.seed, "distractor/noise", i as u64);
            let x = Grid::from_fn(n, n, |r, c| {
                y * a.get(r, c) + z * d.get(r, c) + config.noise_sigma * noise.standard_normal()
            });
            (x, label, z)
        })
        .collect();
    let xs: Vec<Grid> = rows.iter().map(|r| r.0.clone()).collect();
    let samples = global_scale(&xs)?;
    let labels = rows.iter().map(|r| r.1).collect();
    let meta = rows.iter().map(|r| serde_json::json!({ "z": r.2 })).collect();
    let mask = a.support();
    let masks = vec![mask; config.n_samples];
    let split = Split::assign(config.n_samples, config.split, config.seed)?;
    let provenance = serde_json::json!({ "generator": "distractor", "config": config });
    LabeledDataset::new(samples, labels, masks, split, provenance, meta)
}
