//! Class prototypes in the projection space, kept at unit norm and updated
//! by a sample-wise moving average.

use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::math;
use crate::numeric::l2_normalize;
use crate::numeric::matrix::DenseMatrix;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    /// Moving-average coefficient `γ`.
    pub gamma: f64,
    prototypes: DenseMatrix,
}

impl PrototypeBank {
    pub fn new(gamma: f64, dim: usize) -> Self {
        Self {
            gamma,
            prototypes: DenseMatrix::empty(dim),
        }
    }

    pub fn len(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.prototypes.cols()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.prototypes
    }

    pub fn prototype(&self, j: usize) -> Option<&[f64]> {
        (j < self.len()).then(|| self.prototypes.row(j))
    }

    /// Appends `v` normalized; a zero vector is stored as is.
    pub fn push(&mut self, v: &[f64]) {
        let n = l2_normalize(v);
        self.prototypes
            .push_row(&n.vector)
            .expect("prototype width matches the bank");
    }

    /// Appends `count` random unit vectors (normalized Gaussian draws).
    pub fn push_random(&mut self, count: usize, seed: u64) {
        let mut rng = rng_from_seed(seed);
        for _ in 0..count {
            let v: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
            self.push(&v);
        }
    }

    /// For each row in order: `μ_j ← γ μ_j + (1 − γ) z_i` at `j = argmax q_i`
    /// (lowest index on ties), then renormalize `μ_j`. If the average is the
    /// zero vector the prototype becomes `z_i`.
    pub fn update(&mut self, z: &DenseMatrix, q: &DenseMatrix) {
        let g = self.gamma;
        for i in 0..z.rows() {
            let j = math::argmax(q.row(i));
            let zi = z.row(i);
            let mixed: Vec<f64> = self
                .prototypes
                .row(j)
                .iter()
                .zip(zi)
                .map(|(m, x)| g * m + (1.0 - g) * x)
                .collect();
            let n = l2_normalize(&mixed);
            let next = if n.degenerate { zi.to_vec() } else { n.vector };
            self.prototypes.row_mut(j).copy_from_slice(&next);
        }
    }

    /// Labels each row with the prototype in `range` of highest cosine
    /// similarity (lowest index on ties). Works on unnormalized rows too.
    pub fn assign_pseudo_labels(&self, z: &DenseMatrix, range: core::ops::Range<usize>) -> Vec<usize> {
        z.row_iter()
            .map(|row| {
                let mut best = range.start;
                let mut best_s = f64::NEG_INFINITY;
                for j in range.clone() {
                    let s = math::dot(row, self.prototypes.row(j));
                    if s > best_s {
                        best_s = s;
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub fn all_unit_norm(&self, tol: f64) -> bool {
        self.prototypes
            .row_iter()
            .all(|r| (math::sqrt(math::dot(r, r)) - 1.0).abs() <= tol)
    }
}
