//! Optimizer plumbing shared by every stage trainer.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::losses::cross_entropy;
use super::model::{ClassifierGrads, JointModel};
use crate::numeric::matrix::DenseMatrix;
use crate::numeric::{normalize_rows, EncoderGrads, LrSchedule, SgdConfig, SgdState};
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    /// Peak learning rate.
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1.5e-4,
            warmup_ratio: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub epochs: usize,
    /// New (or labeled) samples per batch; replay doubles the batch.
    pub batch_size: usize,
    pub optim: OptimConfig,
}

impl StageSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        let o = &self.optim;
        if !(o.lr >= 0.0 && (0.0..1.0).contains(&o.momentum) && o.weight_decay >= 0.0) {
            return Err(Error::config("optimizer needs lr >= 0, momentum in [0, 1), weight_decay >= 0"));
        }
        if !(0.0..=1.0).contains(&o.warmup_ratio) {
            return Err(Error::config("warmup_ratio must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, samples: usize) -> usize {
        samples.div_ceil(self.batch_size)
    }

    pub fn sgd(&self, samples: usize) -> SgdState {
        let total = (self.epochs * self.steps_per_epoch(samples)) as u64;
        SgdState::new(SgdConfig {
            schedule: LrSchedule::WarmupCosine {
                peak: self.optim.lr,
                warmup_ratio: self.optim.warmup_ratio,
                total_steps: total,
            },
            momentum: self.optim.momentum,
            weight_decay: self.optim.weight_decay,
        })
    }

    /// Shuffled mini-batches of row indices for one epoch.
    pub fn epoch_batches(&self, samples: usize, seed: u64) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..samples).collect();
        idx.shuffle(&mut rng_from_seed(seed));
        idx.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// One momentum-SGD step on every trainable parameter of `model`.
pub fn apply_update(
    model: &mut JointModel,
    sgd: &mut SgdState,
    enc: &EncoderGrads,
    cls: &ClassifierGrads,
) -> Result<()> {
    let grads = model.trainable_grads(enc, cls);
    let params = model.trainable_params_mut();
    sgd.step(params, grads)
}

/// L2-normalized projections `z` of `inputs` (no dropout).
pub fn embed(model: &JointModel, inputs: &DenseMatrix) -> Result<DenseMatrix> {
    let out = model.encoder.forward(inputs, 0.0, 0)?;
    Ok(normalize_rows(&out.projections).0)
}

/// Cross-entropy of the full logits against soft targets with per-row
/// weights, divided by `scale`. Returns the loss and parameter gradients.
pub fn ce_gradients(
    model: &JointModel,
    inputs: &DenseMatrix,
    targets: &DenseMatrix,
    weights: &[f64],
    temperature: f64,
    scale: f64,
) -> Result<(f64, EncoderGrads, ClassifierGrads)> {
    let out = model.encoder.forward(inputs, 0.0, 0)?;
    let logits = model.logits(&out.features)?;
    let mut ce = cross_entropy(&logits, targets, weights, temperature)?;
    ce.grad.scale(1.0 / scale);
    let (cls, d_feat) = model.classifier_backward(&out.features, &ce.grad)?;
    let enc = model.encoder.backward(&out.cache, Some(&d_feat), None)?;
    Ok((ce.loss / scale, enc, cls))
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(model: &JointModel, inputs: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    let pred = model.predict(inputs)?;
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}
