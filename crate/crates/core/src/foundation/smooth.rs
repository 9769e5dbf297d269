//! Separable Gaussian smoothing with an explicitly truncated kernel.

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::error::{Error, Result};

/// Gaussian kernel description. Weights beyond
/// `floor(truncate * sigma + 0.5)` pixels are exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernelSpec {
    pub sigma: f64,
    #[serde(default = "default_truncate")]
    pub truncate: f64,
}

fn default_truncate() -> f64 {
    4.0
}

impl GaussianKernelSpec {
    pub fn new(sigma: f64) -> Self {
        GaussianKernelSpec { sigma, truncate: default_truncate() }
    }

    pub fn with_truncate(sigma: f64, truncate: f64) -> Self {
        GaussianKernelSpec { sigma, truncate }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Config(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if !(self.truncate.is_finite() && self.truncate > 0.0) {
            return Err(Error::Config(format!("truncate must be positive, got {}", self.truncate)));
        }
        Ok(())
    }

    pub fn radius(&self) -> usize {
        (self.truncate * self.sigma + 0.5).floor() as usize
    }

    /// Normalized 1D kernel of length `2 * radius + 1`.
    pub fn kernel_1d(&self) -> Vec<f64> {
        let r = self.radius() as isize;
        if self.sigma == 0.0 {
            return vec![1.0];
        }
        let denom = 2.0 * self.sigma * self.sigma;
        let raw: Vec<f64> = (-r..=r).map(|i| libm::exp(-((i * i) as f64) / denom)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Border {
    /// Mirror about the pixel edge: `d c b a | a b c d | d c b a`.
    #[default]
    Reflect,
    ZeroPad,
}

/// Map a possibly out-of-range index into `0..n` by half-sample reflection.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn convolve_axis(src: &[f64], dst: &mut [f64], len: usize, stride: usize, count: usize, outer: usize, kernel: &[f64], border: Border) {
    // `count` lines of `len` samples; element k of line j sits at j*outer + k*stride.
    let r = (kernel.len() / 2) as isize;
    for line in 0..count {
        let base = line * outer;
        for k in 0..len {
            let mut acc = 0.0;
            for (t, &w) in kernel.iter().enumerate() {
                let idx = k as isize + t as isize - r;
                let v = if idx >= 0 && (idx as usize) < len {
                    src[base + idx as usize * stride]
                } else {
                    match border {
                        Border::Reflect => src[base + reflect_index(idx, len) * stride],
                        Border::ZeroPad => 0.0,
                    }
                };
                acc += w * v;
            }
            dst[base + k * stride] = acc;
        }
    }
}

/// Smooth `grid` with a separable Gaussian. `sigma == 0` returns the input.
pub fn gaussian_smooth(grid: &Grid, spec: GaussianKernelSpec, border: Border) -> Result<Grid> {
    spec.validate()?;
    if spec.sigma == 0.0 || spec.radius() == 0 {
        return Ok(grid.clone());
    }
    let kernel = spec.kernel_1d();
    let (h, w) = grid.dims();
    let src = grid.values();
    let mut tmp = vec![0.0; h * w];
    // rows
    convolve_axis(src, &mut tmp, w, 1, h, w, &kernel, border);
    let mut out = vec![0.0; h * w];
    // columns
    convolve_axis(&tmp, &mut out, h, w, w, 1, &kernel, border);
    Grid::new(h, w, out)
}
