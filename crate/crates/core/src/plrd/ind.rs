//! Supervised training on the labeled in-domain stage.

use super::losses::one_hot;
use super::model::JointModel;
use super::train::{accuracy, apply_update, ce_gradients, StageSchedule};
use crate::data::IndStage;
use crate::rng::derive_seed;
use crate::{Error, Result};
use alloc::format;
use alloc::vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndOutcome {
    /// Validation accuracy of the retained parameters.
    pub val_accuracy: f64,
    /// Epoch (1-based) whose parameters were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

/// Cross-entropy training over all logits. After every epoch the validation
/// accuracy is measured and the best parameters seen are restored at the end.
/// The model's logit dimension must equal the in-domain class count.
pub fn train_ind_stage(
    model: &mut JointModel,
    ind: &IndStage,
    schedule: &StageSchedule,
    seed: u64,
) -> Result<IndOutcome> {
    schedule.validate()?;
    if model.num_classes() != ind.num_classes {
        return Err(Error::contract(format!(
            "in-domain training with {} logits for {} classes",
            model.num_classes(),
            ind.num_classes
        )));
    }
    let train = &ind.train;
    let targets = one_hot(&train.labels, ind.num_classes);
    let mut sgd = schedule.sgd(train.len());
    let mut best: Option<(f64, usize, JointModel)> = None;
    for epoch in 0..schedule.epochs {
        for idx in schedule.epoch_batches(train.len(), derive_seed(seed, &[epoch as u64])) {
            let x = train.features.select_rows(&idx);
            let y = targets.select_rows(&idx);
            let (_, enc, cls) = ce_gradients(model, &x, &y, &vec![1.0; idx.len()], 1.0, idx.len() as f64)?;
            apply_update(model, &mut sgd, &enc, &cls)?;
        }
        let acc = accuracy(model, &ind.validation.features, &ind.validation.labels)?;
        if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
            best = Some((acc, epoch + 1, model.clone()));
        }
    }
    match best {
        Some((acc, epoch, kept)) => {
            *model = kept;
            Ok(IndOutcome {
                val_accuracy: acc,
                best_epoch: Some(epoch),
            })
        }
        None => Ok(IndOutcome {
            val_accuracy: accuracy(model, &ind.validation.features, &ind.validation.labels)?,
            best_epoch: None,
        }),
    }
}
