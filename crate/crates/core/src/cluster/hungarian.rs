//! Minimum-cost assignment (Kuhn–Munkres) and the label/centroid alignments
//! built on it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::numeric::matrix::DenseMatrix;
use crate::{Error, Result};

/// Mapping from predicted (or current) ids to reference ids. Entries are
/// `None` for ids matched only to padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMap {
    pub mapping: Vec<Option<usize>>,
}

impl AssignmentMap {
    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).map(Some).collect(),
        }
    }

    pub fn get(&self, id: usize) -> Option<usize> {
        self.mapping.get(id).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, m)| *m == Some(i))
    }

    /// No two ids map to the same reference id.
    pub fn is_injective(&self) -> bool {
        let mut seen = Vec::new();
        for r in self.mapping.iter().flatten() {
            if seen.contains(r) {
                return false;
            }
            seen.push(*r);
        }
        true
    }
}

/// Solves the rectangular assignment problem minimizing total cost. The
/// matrix is padded to square with zero-cost dummies; the result gives, for
/// each row, its column or `None` when it landed on a dummy column.
///
/// Rows are inserted in index order, which makes the choice among equally
/// optimal assignments deterministic.
pub fn solve_assignment(cost: &DenseMatrix) -> Vec<Option<usize>> {
    let (rows, cols) = cost.shape();
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let at = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            cost.get(i, j)
        } else {
            0.0
        }
    };
    // potentials and matching, 1-indexed with column 0 as the virtual root
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Contingency table `counts[pred][truth]`.
pub fn contingency(pred: &[usize], truth: &[usize], num_pred: usize, num_truth: usize) -> Vec<Vec<usize>> {
    let mut counts = vec![vec![0usize; num_truth]; num_pred];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[p][t] += 1;
    }
    counts
}

/// Assignment maximizing the matched total of a contingency table.
pub fn align_contingency(counts: &[Vec<usize>], num_truth: usize) -> (AssignmentMap, usize) {
    let rows = counts.len();
    let mut cost = DenseMatrix::zeros(rows, num_truth);
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            cost.set(i, j, -(c as f64));
        }
    }
    let mapping = solve_assignment(&cost);
    let matched = mapping
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| counts[i][j]))
        .sum();
    (AssignmentMap { mapping }, matched)
}

/// Aligns predicted cluster ids to true labels, maximizing the number of
/// agreeing samples. Returns the map (indexed by predicted id) and that count.
pub fn hungarian_align(pred: &[usize], truth: &[usize]) -> Result<(AssignmentMap, usize)> {
    if pred.is_empty() {
        return Err(Error::contract("hungarian_align on empty input"));
    }
    if pred.len() != truth.len() {
        return Err(Error::shape(
            "hungarian_align",
            format!("{} truth labels", pred.len()),
            format!("{}", truth.len()),
        ));
    }
    let num_pred = pred.iter().max().map_or(0, |m| m + 1);
    let num_truth = truth.iter().max().map_or(0, |m| m + 1);
    let counts = contingency(pred, truth, num_pred, num_truth);
    Ok(align_contingency(&counts, num_truth))
}

/// Matches each new centroid to an old centroid, minimizing the total squared
/// distance. The map is indexed by new centroid id and yields the old id.
pub fn align_centroids(old: &DenseMatrix, new: &DenseMatrix) -> Result<AssignmentMap> {
    if old.shape() != new.shape() {
        return Err(Error::contract(format!(
            "align_centroids needs equal shapes, got {:?} and {:?}",
            old.shape(),
            new.shape()
        )));
    }
    let k = new.rows();
    let mut cost = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            cost.set(i, j, math::squared_distance(new.row(i), old.row(j)));
        }
    }
    Ok(AssignmentMap {
        mapping: solve_assignment(&cost),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_permutation() {
        let truth = [0, 1, 2, 0, 1, 2, 2];
        let (map, matched) = hungarian_align(&truth, &truth).unwrap();
        assert!(map.is_identity());
        assert_eq!(matched, truth.len());

        let perm = [2, 0, 1];
        let pred: Vec<usize> = truth.iter().map(|&t| perm[t]).collect();
        let (map, matched) = hungarian_align(&pred, &truth).unwrap();
        assert_eq!(matched, truth.len());
        for t in 0..3 {
            assert_eq!(map.get(perm[t]), Some(t));
        }
    }

    #[test]
    fn rectangular_leaves_extra_cluster_unmatched() {
        let pred = [0, 0, 1, 2, 2];
        let truth = [0, 0, 1, 1, 1];
        let (map, matched) = hungarian_align(&pred, &truth).unwrap();
        assert_eq!(matched, 4);
        assert_eq!(map.get(0), Some(0));
        assert_eq!(map.get(2), Some(1));
        assert_eq!(map.get(1), None);
        assert!(map.is_injective());
    }

    #[test]
    fn empty_is_contract_error() {
        assert!(matches!(hungarian_align(&[], &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn centroid_alignment_recovers_permutation() {
        let old = DenseMatrix::from_rows(&[[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]]).unwrap();
        assert!(align_centroids(&old, &old).unwrap().is_identity());
        let new = old.select_rows(&[2, 0, 1]);
        let map = align_centroids(&old, &new).unwrap();
        assert_eq!(map.mapping, vec![Some(2), Some(0), Some(1)]);
        assert!(align_centroids(&old, &DenseMatrix::zeros(2, 2)).is_err());
    }
}
