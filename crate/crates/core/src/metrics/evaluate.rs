use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::compactness::compactness;
use super::eval_key;
use crate::cluster::{align_contingency, AssignmentMap};
use crate::data::StagedSplit;
use crate::numeric::matrix::DenseMatrix;
use crate::plrd::{embed, JointModel};
use crate::{Error, Result};

/// Which predicted out-of-domain ids are aligned together.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentScope {
    /// One assignment over every out-of-domain block.
    #[default]
    Joint,
    /// One assignment per stage block.
    PerStage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionScore {
    /// Aligned accuracy per class set, `a[t][0..=t]`.
    pub row: Vec<f64>,
    /// Accuracy with raw ids compared directly.
    pub unaligned_row: Vec<f64>,
    /// Predicted id -> class id over the whole logit range (in-domain ids
    /// map to themselves).
    pub mapping: AssignmentMap,
}

/// Scores predictions of test samples grouped by class set.
///
/// `predictions[i]` and `truth[i]` cover the test samples of `Y_i`;
/// `true_sizes` are `|Y_0..Y_t|` and `pred_sizes` the model's head blocks
/// (equal to `true_sizes` unless class counts were estimated). In-domain
/// predictions are taken as is; out-of-domain ids go through the Hungarian
/// assignment maximizing matches, and unmatched ids count as errors.
pub fn evaluate_predictions(
    predictions: &[Vec<usize>],
    truth: &[Vec<usize>],
    true_sizes: &[usize],
    pred_sizes: &[usize],
    scope: AlignmentScope,
) -> Result<PredictionScore> {
    let sets = true_sizes.len();
    if predictions.len() != sets || truth.len() != sets || pred_sizes.len() != sets || sets == 0 {
        return Err(Error::contract(format!(
            "evaluation needs {sets} class sets of predictions, truth and head sizes"
        )));
    }
    if pred_sizes[0] != true_sizes[0] {
        return Err(Error::contract(format!(
            "in-domain head has {} outputs for {} classes",
            pred_sizes[0], true_sizes[0]
        )));
    }
    let offsets = |sizes: &[usize]| -> Vec<usize> {
        let mut o = vec![0];
        for s in sizes {
            o.push(o.last().unwrap() + s);
        }
        o
    };
    let p_off = offsets(pred_sizes);
    let t_off = offsets(true_sizes);
    let n_pred = p_off[sets];
    for (p, t) in predictions.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(Error::contract("predictions and labels differ in length"));
        }
        if let Some(bad) = p.iter().find(|&&x| x >= n_pred) {
            return Err(Error::contract(format!("prediction {bad} outside {n_pred} logits")));
        }
    }

    let ind = true_sizes[0];
    let mut mapping: Vec<Option<usize>> = (0..n_pred).map(|p| (p < ind).then_some(p)).collect();
    // blocks of (predicted id range, true id range, contributing class sets)
    let blocks: Vec<(usize, usize, usize, usize, Vec<usize>)> = match scope {
        AlignmentScope::Joint if sets > 1 => {
            vec![(p_off[1], n_pred, t_off[1], t_off[sets], (1..sets).collect())]
        }
        AlignmentScope::Joint => Vec::new(),
        AlignmentScope::PerStage => (1..sets)
            .map(|i| (p_off[i], p_off[i + 1], t_off[i], t_off[i + 1], vec![i]))
            .collect(),
    };
    for (p0, p1, c0, c1, members) in blocks {
        let mut counts = vec![vec![0usize; c1 - c0]; p1 - p0];
        for &i in &members {
            for (&p, &t) in predictions[i].iter().zip(&truth[i]) {
                if (p0..p1).contains(&p) && (c0..c1).contains(&t) {
                    counts[p - p0][t - c0] += 1;
                }
            }
        }
        let (map, _) = align_contingency(&counts, c1 - c0);
        for (k, m) in map.mapping.iter().enumerate() {
            mapping[p0 + k] = m.map(|c| c + c0);
        }
    }

    let frac = |hits: usize, n: usize| if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    let mut row = Vec::with_capacity(sets);
    let mut unaligned_row = Vec::with_capacity(sets);
    for (p, t) in predictions.iter().zip(truth) {
        let aligned = p.iter().zip(t).filter(|(&p, &t)| mapping[p] == Some(t)).count();
        let raw = p.iter().zip(t).filter(|(p, t)| p == t).count();
        row.push(frac(aligned, t.len()));
        unaligned_row.push(frac(raw, t.len()));
    }
    Ok(PredictionScore {
        row,
        unaligned_row,
        mapping: AssignmentMap { mapping },
    })
}

/// Test-set embeddings with raw predictions and true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDump {
    pub stage: usize,
    pub embeddings: DenseMatrix,
    pub predicted: Vec<usize>,
    pub truth: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageEvaluation {
    pub score: PredictionScore,
    /// Compactness of the normalized projections per class set (`None` when
    /// the set has fewer than two classes or a class has a single test sample).
    pub compactness: Vec<Option<f64>>,
    pub dump: FeatureDump,
}

/// Evaluates a model after stage `t` on the cumulative test set.
pub fn evaluate_stage(
    model: &JointModel,
    split: &StagedSplit,
    t: usize,
    scope: AlignmentScope,
) -> Result<StageEvaluation> {
    if t > split.num_stages() {
        return Err(Error::contract(format!("stage {t} beyond {} stages", split.num_stages())));
    }
    let pred_sizes = model.head_sizes();
    if model.num_new() != 0 || pred_sizes.len() != t + 1 {
        return Err(Error::contract(format!(
            "model with {} merged blocks and {} unmerged outputs evaluated at stage {t}",
            pred_sizes.len(),
            model.num_new()
        )));
    }
    let key = eval_key();
    let view = split.sealed().open(&key);
    let true_sizes = &split.stage_sizes()[..=t];
    let mut predictions = Vec::with_capacity(t + 1);
    let mut truth = Vec::with_capacity(t + 1);
    let mut embeddings = DenseMatrix::empty(model.encoder.projection_dim());
    let mut compact = Vec::with_capacity(t + 1);
    for (i, set) in view.test[..=t].iter().enumerate() {
        predictions.push(model.predict(&set.features)?);
        truth.push(set.labels.clone());
        let z = embed(model, &set.features)?;
        let classes: Vec<usize> = split.class_range(i).collect();
        compact.push(
            compactness(&z, &set.labels, &classes)
                .ok()
                .filter(|c| c.is_finite()),
        );
        embeddings = embeddings.vstack(&z)?;
    }
    let score = evaluate_predictions(&predictions, &truth, true_sizes, pred_sizes, scope)?;
    Ok(StageEvaluation {
        score,
        compactness: compact,
        dump: FeatureDump {
            stage: t,
            embeddings,
            predicted: predictions.concat(),
            truth: truth.concat(),
        },
    })
}
