//! Sweep of the signal weight α for a data scenario and reference model.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{train, ModelSpec, TrainConfig};
use crate::tris::{generate_tris_dataset, TrisConfig};

pub const ALPHA_GRID: [f64; 13] = [0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationPoint {
    pub alpha: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    /// Smallest α whose best validation accuracy reaches the target.
    pub alpha: Option<f64>,
    pub target: f64,
    pub points: Vec<CalibrationPoint>,
}

/// Tries `alphas` in ascending order and stops at the first one where the
/// trained model reaches `target` validation accuracy.
pub fn calibrate_alpha(
    base: &TrisConfig,
    model: &ModelSpec,
    training: &TrainConfig,
    alphas: &[f64],
    target: f64,
) -> Result<Calibration> {
    if alphas.is_empty() || alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("alpha grid must be non-empty and strictly increasing".into()));
    }
    let mut points = Vec::new();
    for &alpha in alphas {
        let cfg = TrisConfig { alpha: Some(alpha), ..base.clone() };
        let data = generate_tris_dataset(&cfg)?;
        let outcome = train(model, &data, training)?;
        let val_accuracy = outcome.bundle.provenance.as_ref().map(|p| p.best.val_accuracy).unwrap_or(0.0);
        points.push(CalibrationPoint { alpha, val_accuracy });
        if val_accuracy >= target {
            return Ok(Calibration { alpha: Some(alpha), target, points });
        }
    }
    Ok(Calibration { alpha: None, target, points })
}
