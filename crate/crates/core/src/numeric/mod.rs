//! Dense numeric substrate: matrices, the feed-forward encoder, SGD.

pub mod encoder;
pub mod gradcheck;
pub mod matrix;
pub mod sgd;

use alloc::vec::Vec;

use crate::math;
use matrix::DenseMatrix;

pub use encoder::{Activation, Encoder, EncoderConfig, EncoderGrads, EncoderOutput, ForwardCache, Linear};
pub use sgd::{LrSchedule, SgdConfig, SgdState};

/// Result of [`l2_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub vector: Vec<f64>,
    /// Set when the input had zero norm; the output is then the zero vector.
    pub degenerate: bool,
}

pub fn l2_normalize(v: &[f64]) -> Normalized {
    let norm = math::sqrt(math::dot(v, v));
    if norm == 0.0 {
        return Normalized {
            vector: v.iter().map(|_| 0.0).collect(),
            degenerate: true,
        };
    }
    Normalized {
        vector: v.iter().map(|x| x / norm).collect(),
        degenerate: false,
    }
}

/// Normalizes every row; returns the normalized matrix and the row norms.
/// Zero rows stay zero.
pub fn normalize_rows(m: &DenseMatrix) -> (DenseMatrix, Vec<f64>) {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let row = out.row_mut(r);
        let norm = math::sqrt(math::dot(row, row));
        if norm > 0.0 {
            for x in row.iter_mut() {
                *x /= norm;
            }
        }
        norms.push(norm);
    }
    (out, norms)
}

/// Pulls a gradient on normalized rows `u = x/|x|` back to the raw rows:
/// `dx = (du - u (u·du)) / |x|`.
pub fn normalize_rows_backward(normalized: &DenseMatrix, norms: &[f64], grad: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(grad.rows(), grad.cols());
    for r in 0..grad.rows() {
        if norms[r] == 0.0 {
            continue;
        }
        let u = normalized.row(r);
        let g = grad.row(r);
        let proj = math::dot(u, g);
        for ((o, &gi), &ui) in out.row_mut(r).iter_mut().zip(g).zip(u) {
            *o = (gi - ui * proj) / norms[r];
        }
    }
    out
}
