use serde::{Deserialize, Serialize};

use super::{raw_gradients, ModelBundle, ModelSpec};
use crate::dataset::{LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::foundation::{Grid, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Optimizer {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    Sgd { lr: f64, momentum: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Optimizer {
    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Adam { lr, .. } | Optimizer::Sgd { lr, .. } => lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Epochs without a new best validation loss before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_batch() -> usize {
    64
}

fn default_epochs() -> usize {
    100
}

fn default_patience() -> usize {
    10
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::default(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            patience: default_patience(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = self.optimizer.lr();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        match self.optimizer {
            Optimizer::Adam { beta1, beta2, eps, .. } => {
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                    return Err(Error::Config("adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
                }
            }
            Optimizer::Sgd { momentum, .. } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(Error::Config("sgd momentum must lie in [0, 1)".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingProvenance {
    pub dataset_id: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best: EpochRecord,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub history: Vec<EpochRecord>,
}

/// Loss and accuracy of `logits` against `labels`.
pub fn loss_and_accuracy(logits: &[f64], labels: &[u8]) -> (f64, f64) {
    let n = logits.len() as f64;
    let loss = logits.iter().zip(labels).map(|(&z, &y)| super::bce_with_logits(z, f64::from(y))).sum::<f64>() / n;
    let correct = logits.iter().zip(labels).filter(|(&z, &y)| u8::from(z > 0.0) == y).count();
    (loss, correct as f64 / n)
}

/// Mini-batch training with early stopping on validation loss. The returned
/// bundle holds the parameters of the best validation epoch.
pub fn train(spec: &ModelSpec, dataset: &LabeledDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let train_idx = dataset.indices(Partition::Train).to_vec();
    let val_idx = dataset.indices(Partition::Val).to_vec();
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Config("training needs non-empty train and validation splits".into()));
    }
    if dataset.dims() != spec.input_dims() {
        return Err(Error::Shape(format!("dataset is {:?} but the model expects {:?}", dataset.dims(), spec.input_dims())));
    }
    let mut bundle = ModelBundle::init(spec.clone(), config.seed)?;
    let layers = bundle.layers().to_vec();
    let mut params = bundle.buffers();
    let mut m1: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut m2 = m1.clone();
    let (mut beta1_t, mut beta2_t) = (1.0, 1.0);

    let val_x: Vec<Grid> = val_idx.iter().map(|&i| dataset.samples[i].clone()).collect();
    let val_y: Vec<u8> = val_idx.iter().map(|&i| dataset.labels[i]).collect();
    let mut history = Vec::new();
    let mut best: Option<(EpochRecord, Vec<Vec<f64>>)> = None;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        let mut order = train_idx.clone();
        Rng::for_purpose(config.seed, "models/shuffle", epoch as u64).shuffle(&mut order);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let xs: Vec<Grid> = chunk.iter().map(|&i| dataset.samples[i].clone()).collect();
            let ys: Vec<u8> = chunk.iter().map(|&i| dataset.labels[i]).collect();
            let g = raw_gradients(&layers, &params, &xs, &ys, spec.input_dims())?;
            if !g.loss.is_finite() || g.params.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, loss: g.loss });
            }
            loss_sum += g.loss * chunk.len() as f64;
            correct += g.logits.iter().zip(&ys).filter(|(&z, &y)| u8::from(z > 0.0) == y).count();
            match config.optimizer {
                Optimizer::Adam { lr, beta1, beta2, eps } => {
                    beta1_t *= beta1;
                    beta2_t *= beta2;
                    for (k, grad) in g.params.iter().enumerate() {
                        for (i, &d) in grad.iter().enumerate() {
                            m1[k][i] = beta1 * m1[k][i] + (1.0 - beta1) * d;
                            m2[k][i] = beta2 * m2[k][i] + (1.0 - beta2) * d * d;
                            let mhat = m1[k][i] / (1.0 - beta1_t);
                            let vhat = m2[k][i] / (1.0 - beta2_t);
                            params[k][i] -= lr * mhat / (vhat.sqrt() + eps);
                        }
                    }
                }
                Optimizer::Sgd { lr, momentum } => {
                    for (k, grad) in g.params.iter().enumerate() {
                        for (i, &d) in grad.iter().enumerate() {
                            m1[k][i] = momentum * m1[k][i] + d;
                            params[k][i] -= lr * m1[k][i];
                        }
                    }
                }
            }
        }
        if params.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDiverged { epoch, loss: f64::NAN });
        }
        bundle.set_buffers(&params);
        let val_logits: Vec<f64> = val_x.iter().map(|x| bundle.logit(x)).collect::<Result<_>>()?;
        let (val_loss, val_accuracy) = loss_and_accuracy(&val_logits, &val_y);
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss: val_loss });
        }
        let n = train_idx.len() as f64;
        let record = EpochRecord { epoch, train_loss: loss_sum / n, train_accuracy: correct as f64 / n, val_loss, val_accuracy };
        history.push(record.clone());
        if best.as_ref().is_none_or(|(b, _)| val_loss < b.val_loss) {
            best = Some((record, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (best_record, best_params) = best.expect("at least one epoch ran");
    bundle.set_buffers(&best_params);
    bundle.provenance = Some(TrainingProvenance {
        dataset_id: dataset.id.clone(),
        seed: config.seed,
        config: *config,
        epochs_run: history.len(),
        best_epoch: best_record.epoch,
        best: best_record,
    });
    Ok(TrainOutcome { bundle, history })
}
