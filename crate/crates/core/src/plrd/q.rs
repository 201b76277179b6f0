//! Soft assignment targets over all prototypes.

use alloc::format;

use super::memory::Origin;
use crate::cluster::sinkhorn_calibrate;
use crate::numeric::matrix::DenseMatrix;
use crate::{Error, Result};

/// Builds one q vector of length `known_old + calibrated_new.len()`.
///
/// Old samples get the one-hot vector of their label. New samples get zeros
/// on the old block and the calibrated new-class assignment, renormalized to
/// sum to one, on the new block.
pub fn compute_q(
    origin: Origin,
    old_label: Option<usize>,
    calibrated_new: &[f64],
    known_old: usize,
) -> Result<alloc::vec::Vec<f64>> {
    let mut q = alloc::vec![0.0; known_old + calibrated_new.len()];
    match origin {
        Origin::Old => {
            let label = old_label.ok_or_else(|| Error::contract("old sample without a label"))?;
            if label >= known_old {
                return Err(Error::contract(format!(
                    "old label {label} outside the {known_old} known classes"
                )));
            }
            q[label] = 1.0;
        }
        Origin::New => {
            let mass: f64 = calibrated_new.iter().sum();
            if !(mass > 0.0) {
                return Err(Error::contract("calibrated assignment has no mass"));
            }
            for (dst, &v) in q[known_old..].iter_mut().zip(calibrated_new) {
                *dst = v / mass;
            }
        }
    }
    Ok(q)
}

/// q vectors for a batch: new rows first (`new_logits` holds their new-block
/// logits and is calibrated jointly), then one-hot rows for `old_labels`.
pub fn compute_q_batch(
    new_logits: &DenseMatrix,
    old_labels: &[usize],
    known_old: usize,
    epsilon: f64,
    iterations: usize,
) -> Result<DenseMatrix> {
    let k_new = new_logits.cols();
    let rows = new_logits.rows() + old_labels.len();
    let mut q = DenseMatrix::zeros(rows, known_old + k_new);
    if new_logits.rows() > 0 && k_new > 0 {
        let cal = sinkhorn_calibrate(new_logits, epsilon, iterations)?;
        for i in 0..cal.rows() {
            let v = compute_q(Origin::New, None, cal.row(i), known_old)?;
            q.row_mut(i).copy_from_slice(&v);
        }
    }
    for (k, &label) in old_labels.iter().enumerate() {
        let v = compute_q(Origin::Old, Some(label), &alloc::vec![0.0; k_new], known_old)?;
        q.row_mut(new_logits.rows() + k).copy_from_slice(&v);
    }
    Ok(q)
}
