//! Comparison methods sharing the staged protocol and the replay memory:
//! a cluster-then-train pipeline, its iteratively re-clustered variant and an
//! end-to-end swapped-prediction learner.

mod deepaligned;
mod e2e;
mod kmeans_pipeline;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::OodStage;
use crate::math;
use crate::numeric::matrix::DenseMatrix;
use crate::numeric::{normalize_rows, SgdState};
use crate::plrd::losses::one_hot;
use crate::plrd::{
    apply_update, assemble_batch, ce_gradients, memory_select, JointModel, PrototypeBank, ReplayMemory,
    SelectionStrategy, StageSchedule,
};
use crate::rng::{derive_seed, tag};
use crate::{Error, Result};

pub use deepaligned::run_deepaligned_stage;
pub use e2e::{e2e_batch_loss, run_e2e_stage, swapped_prediction_loss, E2eBatchLoss, SwapLoss};
pub use kmeans_pipeline::run_kmeans_stage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub schedule: StageSchedule,
    /// Weight of the cross-entropy on replayed samples.
    pub lambda: f64,
    /// Re-clustering rounds of the aligned pipeline.
    pub align_rounds: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_restarts: usize,
    /// Cross-entropy temperature of the end-to-end learner.
    pub temperature: f64,
    pub sk_epsilon: f64,
    pub sk_iterations: usize,
    pub dropout: f64,
    pub memory_per_class: usize,
    pub selection: SelectionStrategy,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(Error::config("replay weight lambda must be non-negative"));
        }
        if self.align_rounds == 0 {
            return Err(Error::config("align_rounds must be at least 1"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::config("temperature must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineLog {
    pub batches: usize,
    pub mean_loss: f64,
    /// Pseudo-labels (stage-local ids) of the training data, last clustering.
    pub cluster_labels: Vec<usize>,
    /// Per aligned round after the first: new cluster id -> previous id.
    pub alignments: Vec<Vec<Option<usize>>>,
    pub empty_cluster_rounds: usize,
    pub new_only_batches: usize,
    pub notes: Vec<String>,
}

/// Opens the stage: distillation snapshot plus a new head block.
fn open_stage(model: &mut JointModel, num_new: usize, seed: u64) -> Result<()> {
    model.begin_stage();
    model.expand_classifier(num_new, derive_seed(seed, &[tag::HEAD]))
}

/// Cross-entropy epochs on pseudo-labeled new rows (`labels` are joint
/// class ids) mixed with replayed rows weighted by `lambda`.
#[allow(clippy::too_many_arguments)]
fn train_epochs(
    model: &mut JointModel,
    memory: &ReplayMemory,
    stage: &OodStage,
    labels: &[usize],
    epochs: core::ops::Range<usize>,
    config: &BaselineConfig,
    sgd: &mut SgdState,
    seed: u64,
    log: &mut BaselineLog,
) -> Result<()> {
    let k = model.num_classes();
    let schedule = &config.schedule;
    for epoch in epochs {
        let e = epoch as u64;
        for (bi, idx) in schedule
            .epoch_batches(stage.train.rows(), derive_seed(seed, &[tag::STAGE, e]))
            .into_iter()
            .enumerate()
        {
            let new = stage.train.select_rows(&idx);
            let batch = assemble_batch(&new, memory, derive_seed(seed, &[tag::MEMORY, e, bi as u64]));
            if batch.num_old() == 0 {
                log.new_only_batches += 1;
            }
            let mut y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            y.extend_from_slice(&batch.old_labels);
            let mut weights = vec![1.0; batch.num_new()];
            weights.extend(core::iter::repeat_n(config.lambda, batch.num_old()));
            let (loss, enc, cls) =
                ce_gradients(model, &batch.inputs, &one_hot(&y, k), &weights, 1.0, batch.len() as f64)?;
            apply_update(model, sgd, &enc, &cls)?;
            log.mean_loss += loss;
            log.batches += 1;
        }
    }
    Ok(())
}

/// Closes the stage: pseudo-labels from the new head, memory selection,
/// head merge. Prototype-based selection uses per-class means of the
/// normalized features.
fn close_stage(
    model: &mut JointModel,
    memory: &mut ReplayMemory,
    stage: &OodStage,
    num_new: usize,
    config: &BaselineConfig,
    seed: u64,
) -> Result<()> {
    let known_old = model.num_old();
    let features = model.encoder.features(&stage.train)?;
    let logits = model.logits(&features)?;
    let pseudo: Vec<usize> = logits
        .select_cols(known_old, known_old + num_new)
        .row_iter()
        .map(|r| known_old + math::argmax(r))
        .collect();
    let (emb, _) = normalize_rows(&features);
    let bank;
    let guide = match config.selection {
        SelectionStrategy::Random => None,
        _ => {
            bank = class_mean_bank(&emb, &pseudo, known_old + num_new);
            Some((&emb, &bank))
        }
    };
    let selection = memory_select(
        &pseudo,
        config.memory_per_class,
        config.selection,
        guide,
        derive_seed(seed, &[tag::MEMORY]),
    )?;
    memory.add_classes(known_old, num_new, &stage.train, &selection)?;
    model.merge_heads()?;
    model.end_stage();
    Ok(())
}

/// Normalized per-class means of `emb`; classes without rows get a zero row.
fn class_mean_bank(emb: &DenseMatrix, labels: &[usize], classes: usize) -> PrototypeBank {
    let mut sums = DenseMatrix::zeros(classes, emb.cols());
    for (i, &l) in labels.iter().enumerate() {
        for (s, x) in sums.row_mut(l).iter_mut().zip(emb.row(i)) {
            *s += x;
        }
    }
    let mut bank = PrototypeBank::new(0.0, emb.cols());
    sums.row_iter().for_each(|r| bank.push(r));
    bank
}

/// Handles stages without new classes or data identically for every method.
fn trivial_stage(
    model: &mut JointModel,
    memory: &mut ReplayMemory,
    stage: &OodStage,
    num_new: usize,
    log: &mut BaselineLog,
) -> Result<bool> {
    if num_new > 0 && stage.train.rows() > 0 {
        return Ok(false);
    }
    let known_old = model.num_old();
    model.begin_stage();
    model.merge_heads()?;
    model.end_stage();
    memory.add_classes(known_old, num_new, &stage.train, &[])?;
    log.notes.push("stage without new classes or data; nothing trained".into());
    Ok(true)
}
