//! One unlabeled stage of prototype-guided learning with replay and feature
//! distillation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::losses::{cross_entropy, feature_distill_loss, instance_cl_loss, one_hot, pcl_loss};
use super::memory::{assemble_batch, memory_select, MixedBatch, ReplayMemory, SelectionStrategy};
use super::model::{ClassifierGrads, JointModel};
use super::prototypes::PrototypeBank;
use super::q::compute_q_batch;
use super::train::{apply_update, embed, StageSchedule};
use crate::data::OodStage;
use crate::numeric::matrix::DenseMatrix;
use crate::numeric::{normalize_rows, normalize_rows_backward, EncoderGrads};
use crate::rng::{derive_seed, tag};
use crate::{Error, Result};

/// Multipliers of the four loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub ce: f64,
    pub pcl: f64,
    pub ins: f64,
    pub fd: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ce: 1.0,
            pcl: 1.0,
            ins: 1.0,
            fd: 1.0,
        }
    }
}

/// Rows that take part in the instance-level contrastive loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceRows {
    /// New and replayed rows alike.
    #[default]
    Mixed,
    /// New rows only; replayed rows are drawn with replacement and may repeat.
    New,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlrdConfig {
    pub schedule: StageSchedule,
    /// Temperature of both contrastive losses.
    pub tau: f64,
    pub gamma: f64,
    pub sk_epsilon: f64,
    pub sk_iterations: usize,
    /// Dropout probability of the augmented view.
    pub dropout: f64,
    pub weights: LossWeights,
    pub instance_rows: InstanceRows,
    pub memory_per_class: usize,
    pub selection: SelectionStrategy,
}

/// Weighted, batch-reduced loss terms; their sum is the total loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub ce: f64,
    pub pcl: f64,
    pub ins: f64,
    pub fd: f64,
}

impl LossComponents {
    pub fn total(&self) -> f64 {
        self.ce + self.pcl + self.ins + self.fd
    }

    fn accumulate(&mut self, o: &LossComponents) {
        self.ce += o.ce;
        self.pcl += o.pcl;
        self.ins += o.ins;
        self.fd += o.fd;
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            ce: self.ce * s,
            pcl: self.pcl * s,
            ins: self.ins * s,
            fd: self.fd * s,
        }
    }
}

/// Stop-gradient targets of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTargets {
    /// q vectors over all known prototypes.
    pub q: DenseMatrix,
    /// Class ids for cross-entropy: pseudo-labels for new rows, stored labels
    /// for old rows.
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub components: LossComponents,
    pub total: f64,
    pub encoder_grads: EncoderGrads,
    pub classifier_grads: ClassifierGrads,
    /// Normalized projections of the clean view.
    pub z: DenseMatrix,
    pub targets: BatchTargets,
}

/// Loss and gradients of one mixed batch. Targets are derived from the clean
/// forward pass unless `fixed` supplies them.
///
/// Reductions: cross-entropy and prototype terms are averaged over all rows,
/// the instance term over its participating rows and distillation over the
/// old rows.
pub fn plrd_batch_loss(
    model: &JointModel,
    batch: &MixedBatch,
    bank: &PrototypeBank,
    config: &PlrdConfig,
    dropout_seed: u64,
    fixed: Option<&BatchTargets>,
) -> Result<BatchLoss> {
    let known_old = model.num_old();
    let k_all = model.num_classes();
    if bank.len() != k_all {
        return Err(Error::contract(format!(
            "{} prototypes for {k_all} known classes",
            bank.len()
        )));
    }
    let b = batch.len();
    let n_new = batch.num_new();
    let n_old = batch.num_old();
    let w = config.weights;

    let clean = model.encoder.forward(&batch.inputs, 0.0, 0)?;
    let (z, norms) = normalize_rows(&clean.projections);
    let logits = model.logits(&clean.features)?;

    let targets = match fixed {
        Some(t) => t.clone(),
        None => {
            let new_rows: Vec<usize> = (0..n_new).collect();
            let new_logits = logits.select_rows(&new_rows).select_cols(known_old, k_all);
            let q = compute_q_batch(
                &new_logits,
                &batch.old_labels,
                known_old,
                config.sk_epsilon,
                config.sk_iterations,
            )?;
            let mut labels = bank.assign_pseudo_labels(&z.select_rows(&new_rows), known_old..k_all);
            labels.extend_from_slice(&batch.old_labels);
            BatchTargets { q, labels }
        }
    };

    let mut comps = LossComponents::default();
    let inv_b = 1.0 / b as f64;

    // cross-entropy on the joint logits
    let ce = cross_entropy(&logits, &one_hot(&targets.labels, k_all), &vec![1.0; b], 1.0)?;
    comps.ce = w.ce * ce.loss * inv_b;
    let mut d_logits = ce.grad;
    d_logits.scale(w.ce * inv_b);
    let (classifier_grads, mut d_feat) = model.classifier_backward(&clean.features, &d_logits)?;

    // prototype contrast
    let pcl = pcl_loss(&z, bank.matrix(), &targets.q, config.tau)?;
    comps.pcl = w.pcl * pcl.loss * inv_b;
    let mut d_z = pcl.grad;
    d_z.scale(w.pcl * inv_b);

    // instance contrast against the dropout view
    let ins_rows: Vec<usize> = match config.instance_rows {
        InstanceRows::Mixed => (0..b).collect(),
        InstanceRows::New => (0..n_new).collect(),
    };
    let mut aug_grads = None;
    if ins_rows.len() >= 2 && w.ins != 0.0 {
        let inputs = match config.instance_rows {
            InstanceRows::Mixed => batch.inputs.clone(),
            InstanceRows::New => batch.inputs.select_rows(&ins_rows),
        };
        let s = w.ins / ins_rows.len() as f64;
        let aug = model.encoder.forward(&inputs, config.dropout, dropout_seed)?;
        let (z_aug, aug_norms) = normalize_rows(&aug.projections);
        let mut ins = instance_cl_loss(&z.select_rows(&ins_rows), &z_aug, config.tau)?;
        comps.ins = ins.loss * s;
        ins.grad_z.scale(s);
        for (k, &r) in ins_rows.iter().enumerate() {
            d_z.row_mut(r).iter_mut().zip(ins.grad_z.row(k)).for_each(|(d, g)| *d += g);
        }
        ins.grad_aug.scale(s);
        let d_p_aug = normalize_rows_backward(&z_aug, &aug_norms, &ins.grad_aug);
        aug_grads = Some(model.encoder.backward(&aug.cache, None, Some(&d_p_aug))?);
    }

    // distillation on replayed rows
    if n_old > 0 && w.fd != 0.0 {
        let frozen = model
            .frozen_encoder()
            .ok_or_else(|| Error::contract("feature distillation outside a stage"))?;
        let old_rows: Vec<usize> = (n_new..b).collect();
        let old_inputs = batch.inputs.select_rows(&old_rows);
        let f0 = frozen.features(&old_inputs)?;
        let fd = feature_distill_loss(&clean.features.select_rows(&old_rows), &f0)?;
        let s = w.fd / n_old as f64;
        comps.fd = fd.loss * s;
        for (k, r) in old_rows.iter().enumerate() {
            for (d, g) in d_feat.row_mut(*r).iter_mut().zip(fd.grad.row(k)) {
                *d += s * g;
            }
        }
    }

    let d_p = normalize_rows_backward(&z, &norms, &d_z);
    let mut encoder_grads = model.encoder.backward(&clean.cache, Some(&d_feat), Some(&d_p))?;
    if let Some(g) = aug_grads {
        encoder_grads.add_assign(&g)?;
    }
    Ok(BatchLoss {
        total: comps.total(),
        components: comps,
        encoder_grads,
        classifier_grads,
        z,
        targets,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub batches: usize,
    /// Per-batch averages of the loss terms.
    pub mean_losses: LossComponents,
    /// Batches trained without replayed samples.
    pub new_only_batches: usize,
    /// Pseudo-label histogram of the stage's training data at stage close.
    pub pseudo_label_counts: Vec<usize>,
    pub notes: Vec<alloc::string::String>,
}

/// Makes sure every old class has a prototype. Missing ones are the mean
/// normalized projection of that class's memory samples, or a random unit
/// vector when the class has none stored.
pub fn ensure_old_prototypes(
    bank: &mut PrototypeBank,
    model: &JointModel,
    memory: &ReplayMemory,
    known_old: usize,
    seed: u64,
) -> Result<()> {
    for c in bank.len()..known_old {
        match memory.class(c).filter(|m| m.rows() > 0) {
            Some(rows) => {
                let z = embed(model, rows)?;
                let mut mean = vec![0.0; z.cols()];
                for r in z.row_iter() {
                    mean.iter_mut().zip(r).for_each(|(m, x)| *m += x / z.rows() as f64);
                }
                bank.push(&mean);
            }
            None => bank.push_random(1, derive_seed(seed, &[c as u64])),
        }
    }
    Ok(())
}

/// Trains one unlabeled stage. On return the new head is merged, memory
/// holds up to `n` samples per discovered class (by pseudo-label) and the bank
/// holds one prototype per known class.
pub fn train_ood_stage(
    model: &mut JointModel,
    memory: &mut ReplayMemory,
    bank: &mut PrototypeBank,
    stage: &OodStage,
    num_new: usize,
    config: &PlrdConfig,
    seed: u64,
) -> Result<StageLog> {
    let schedule = &config.schedule;
    schedule.validate()?;
    let mut log = StageLog::default();
    let known_old = model.num_old();
    model.begin_stage();
    if num_new == 0 || stage.train.rows() == 0 {
        model.merge_heads()?;
        model.end_stage();
        memory.add_classes(known_old, num_new, &stage.train, &[])?;
        log.notes.push("stage without new classes or data; nothing trained".into());
        return Ok(log);
    }
    model.expand_classifier(num_new, derive_seed(seed, &[tag::HEAD]))?;
    ensure_old_prototypes(bank, model, memory, known_old, derive_seed(seed, &[tag::PROTOTYPES, 0]))?;
    bank.push_random(num_new, derive_seed(seed, &[tag::PROTOTYPES, 1]));

    let n = stage.train.rows();
    let mut sgd = schedule.sgd(n);
    let mut sum = LossComponents::default();
    for epoch in 0..schedule.epochs {
        let e = epoch as u64;
        for (bi, idx) in schedule
            .epoch_batches(n, derive_seed(seed, &[tag::STAGE, e]))
            .into_iter()
            .enumerate()
        {
            let bi = bi as u64;
            let new = stage.train.select_rows(&idx);
            let batch = assemble_batch(&new, memory, derive_seed(seed, &[tag::MEMORY, e, bi]));
            if batch.num_old() == 0 {
                log.new_only_batches += 1;
            }
            let step = plrd_batch_loss(model, &batch, bank, config, derive_seed(seed, &[e, bi]), None)?;
            apply_update(model, &mut sgd, &step.encoder_grads, &step.classifier_grads)?;
            bank.update(&step.z, &step.targets.q);
            sum.accumulate(&step.components);
            log.batches += 1;
        }
    }
    log.mean_losses = sum.scaled(1.0 / log.batches.max(1) as f64);

    let z = embed(model, &stage.train)?;
    let pseudo = bank.assign_pseudo_labels(&z, known_old..known_old + num_new);
    let mut counts = vec![0; num_new];
    pseudo.iter().for_each(|&p| counts[p - known_old] += 1);
    log.pseudo_label_counts = counts;
    let guide = match config.selection {
        SelectionStrategy::Random => None,
        _ => Some((&z, &*bank)),
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
    Ok(log)
}
