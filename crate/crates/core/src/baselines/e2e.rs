use alloc::vec;
use alloc::vec::Vec;

use super::{close_stage, open_stage, trivial_stage, BaselineConfig, BaselineLog};
use crate::cluster::sinkhorn_calibrate;
use crate::data::OodStage;
use crate::numeric::matrix::DenseMatrix;
use crate::numeric::EncoderGrads;
use crate::plrd::losses::{cross_entropy, one_hot};
use crate::plrd::{apply_update, assemble_batch, ClassifierGrads, JointModel, MixedBatch, ReplayMemory};
use crate::rng::{derive_seed, tag};
use crate::Result;

/// Swapped-prediction loss over the new rows of two views.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapLoss {
    pub loss: f64,
    pub grad_a: DenseMatrix,
    pub grad_b: DenseMatrix,
    /// Calibrated assignment of view A over all classes (zeros on the old
    /// block); it is the target of view B, and vice versa.
    pub target_a: DenseMatrix,
    pub target_b: DenseMatrix,
}

/// Calibrated new-block assignment of `logits`, padded with zeros on the
/// first `known_old` columns.
pub fn calibrated_targets(
    logits: &DenseMatrix,
    known_old: usize,
    epsilon: f64,
    iterations: usize,
) -> Result<DenseMatrix> {
    let k = logits.cols();
    let cal = sinkhorn_calibrate(&logits.select_cols(known_old, k), epsilon, iterations)?;
    DenseMatrix::zeros(logits.rows(), known_old).hstack(&cal)
}

/// `Σ_i CE(l^B_i / T, q^A_i) + CE(l^A_i / T, q^B_i)` with stop-gradient
/// targets. `targets` overrides the calibrated `(q^A, q^B)`.
pub fn swapped_prediction_loss(
    logits_a: &DenseMatrix,
    logits_b: &DenseMatrix,
    known_old: usize,
    config: &BaselineConfig,
    targets: Option<(&DenseMatrix, &DenseMatrix)>,
) -> Result<SwapLoss> {
    let (target_a, target_b) = match targets {
        Some((a, b)) => (a.clone(), b.clone()),
        None => (
            calibrated_targets(logits_a, known_old, config.sk_epsilon, config.sk_iterations)?,
            calibrated_targets(logits_b, known_old, config.sk_epsilon, config.sk_iterations)?,
        ),
    };
    let ones = vec![1.0; logits_a.rows()];
    let on_b = cross_entropy(logits_b, &target_a, &ones, config.temperature)?;
    let on_a = cross_entropy(logits_a, &target_b, &ones, config.temperature)?;
    Ok(SwapLoss {
        loss: on_a.loss + on_b.loss,
        grad_a: on_a.grad,
        grad_b: on_b.grad,
        target_a,
        target_b,
    })
}

#[derive(Debug, Clone)]
pub struct E2eBatchLoss {
    pub loss: f64,
    pub encoder_grads: EncoderGrads,
    pub classifier_grads: ClassifierGrads,
    pub target_a: DenseMatrix,
    pub target_b: DenseMatrix,
}

/// Loss of one mixed batch: swapped targets on new rows and hard labels on
/// replayed rows (weight `lambda`), both views, averaged over `2 |batch|`.
pub fn e2e_batch_loss(
    model: &JointModel,
    batch: &MixedBatch,
    config: &BaselineConfig,
    seeds: (u64, u64),
    targets: Option<(&DenseMatrix, &DenseMatrix)>,
) -> Result<E2eBatchLoss> {
    let known_old = model.num_old();
    let k = model.num_classes();
    let n_new = batch.num_new();
    let scale = 1.0 / (2.0 * batch.len() as f64);
    let view_a = model.encoder.forward(&batch.inputs, config.dropout, seeds.0)?;
    let view_b = model.encoder.forward(&batch.inputs, config.dropout, seeds.1)?;
    let logits_a = model.logits(&view_a.features)?;
    let logits_b = model.logits(&view_b.features)?;
    let new_rows: Vec<usize> = (0..n_new).collect();
    let old_rows: Vec<usize> = (n_new..batch.len()).collect();

    let swap = swapped_prediction_loss(
        &logits_a.select_rows(&new_rows),
        &logits_b.select_rows(&new_rows),
        known_old,
        config,
        targets,
    )?;
    let mut d_a = DenseMatrix::zeros(batch.len(), k);
    let mut d_b = DenseMatrix::zeros(batch.len(), k);
    for i in 0..n_new {
        d_a.row_mut(i).copy_from_slice(swap.grad_a.row(i));
        d_b.row_mut(i).copy_from_slice(swap.grad_b.row(i));
    }
    let mut loss = swap.loss;
    if !old_rows.is_empty() {
        let y = one_hot(&batch.old_labels, k);
        let w = vec![config.lambda; old_rows.len()];
        for (logits, d) in [(&logits_a, &mut d_a), (&logits_b, &mut d_b)] {
            let ce = cross_entropy(&logits.select_rows(&old_rows), &y, &w, config.temperature)?;
            loss += ce.loss;
            for (k, &r) in old_rows.iter().enumerate() {
                d.row_mut(r).copy_from_slice(ce.grad.row(k));
            }
        }
    }
    d_a.scale(scale);
    d_b.scale(scale);
    let (mut cls, df_a) = model.classifier_backward(&view_a.features, &d_a)?;
    let (cls_b, df_b) = model.classifier_backward(&view_b.features, &d_b)?;
    cls.old.weight.add_assign(&cls_b.old.weight)?;
    cls.new.weight.add_assign(&cls_b.new.weight)?;
    cls.old.bias.iter_mut().zip(&cls_b.old.bias).for_each(|(a, b)| *a += b);
    cls.new.bias.iter_mut().zip(&cls_b.new.bias).for_each(|(a, b)| *a += b);
    let mut enc = model.encoder.backward(&view_a.cache, Some(&df_a), None)?;
    enc.add_assign(&model.encoder.backward(&view_b.cache, Some(&df_b), None)?)?;
    Ok(E2eBatchLoss {
        loss: loss * scale,
        encoder_grads: enc,
        classifier_grads: cls,
        target_a: swap.target_a,
        target_b: swap.target_b,
    })
}

/// End-to-end stage: each batch's new samples are seen under two dropout
/// views and each view learns the other's calibrated assignment.
pub fn run_e2e_stage(
    model: &mut JointModel,
    memory: &mut ReplayMemory,
    stage: &OodStage,
    num_new: usize,
    config: &BaselineConfig,
    seed: u64,
) -> Result<BaselineLog> {
    config.validate()?;
    let mut log = BaselineLog::default();
    if trivial_stage(model, memory, stage, num_new, &mut log)? {
        return Ok(log);
    }
    open_stage(model, num_new, seed)?;
    let schedule = &config.schedule;
    let n = stage.train.rows();
    let mut sgd = schedule.sgd(n);
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
            let seeds = (derive_seed(seed, &[e, bi, 0]), derive_seed(seed, &[e, bi, 1]));
            let step = e2e_batch_loss(model, &batch, config, seeds, None)?;
            apply_update(model, &mut sgd, &step.encoder_grads, &step.classifier_grads)?;
            log.mean_loss += step.loss;
            log.batches += 1;
        }
    }
    log.mean_loss /= log.batches.max(1) as f64;
    close_stage(model, memory, stage, num_new, config, seed)?;
    Ok(log)
}
